"""Primal-dual interior-point solver for cone programs.

Solves the pair

    minimize    c'x                 maximize    -b'y - h'z
    subject to  A x = b             subject to  A'y + G'z + c = 0
                G x + s = h                     z in K*
                s in K

where K is a product of a nonnegative orthant and second-order cones
(t, u) with t >= ||u||. Mehrotra predictor-corrector with Nesterov-Todd
scaling; the KKT system is reduced to a symmetric quasi-definite form and
solved dense, which is the right trade for feeder-sized problems (a few
hundred variables).

Only numpy/scipy are used; no external solver is wrapped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

STEP_FRACTION = 0.99


@dataclass
class ConeDims:
    """Sizes of the cone blocks, orthant first, then second-order cones."""

    nonneg: int = 0
    soc: tuple[int, ...] = ()

    @property
    def total(self) -> int:
        return self.nonneg + sum(self.soc)

    @property
    def rank(self) -> int:
        # barrier degree: 1 per orthant entry, 1 per SOC block
        return self.nonneg + len(self.soc)


@dataclass
class ConicResult:
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: str  # "optimal" | "max_iterations" | "numerical"
    iterations: int
    gap: float
    pres: float
    dres: float
    relgap: float = field(default=np.nan)
    pobj: float = field(default=np.nan)

    def meets(self, tol: float) -> bool:
        """True if the returned point satisfies all residuals at `tol`.

        A run that stalls numerically on a degenerate face can still carry a
        perfectly usable iterate; acceptance is a property of the point, not
        of the termination flag.
        """
        return bool(
            np.isfinite(self.pres)
            and max(self.pres, self.dres, self.relgap) <= tol
        )


# -- Jordan-algebra helpers on the block structure -------------------------


def _blocks(dims: ConeDims):
    """Yield (start, stop, is_soc) for every cone block."""
    if dims.nonneg:
        yield 0, dims.nonneg, False
    idx = dims.nonneg
    for m in dims.soc:
        yield idx, idx + m, True
        idx += m


def cone_identity(dims: ConeDims) -> np.ndarray:
    e = np.zeros(dims.total)
    e[: dims.nonneg] = 1.0
    idx = dims.nonneg
    for m in dims.soc:
        e[idx] = 1.0
        idx += m
    return e


def min_eig(u: np.ndarray, dims: ConeDims) -> float:
    """Smallest spectral value; positive iff u is strictly inside K."""
    worst = np.inf
    for a, b, soc in _blocks(dims):
        blk = u[a:b]
        if soc:
            worst = min(worst, blk[0] - np.linalg.norm(blk[1:]))
        elif blk.size:
            worst = min(worst, np.min(blk))
    return worst


def jordan_prod(u: np.ndarray, w: np.ndarray, dims: ConeDims) -> np.ndarray:
    out = np.empty_like(u)
    for a, b, soc in _blocks(dims):
        if soc:
            out[a] = u[a:b] @ w[a:b]
            out[a + 1 : b] = u[a] * w[a + 1 : b] + w[a] * u[a + 1 : b]
        else:
            out[a:b] = u[a:b] * w[a:b]
    return out


def jordan_div(lmbda: np.ndarray, d: np.ndarray, dims: ConeDims) -> np.ndarray:
    """Solve lmbda o u = d blockwise (arrow-matrix inverse on SOC blocks)."""
    out = np.empty_like(d)
    for a, b, soc in _blocks(dims):
        if soc:
            l0, l1 = lmbda[a], lmbda[a + 1 : b]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * d[a] - l1 @ d[a + 1 : b]) / det
            out[a] = u0
            out[a + 1 : b] = (d[a + 1 : b] - u0 * l1) / l0
        else:
            out[a:b] = d[a:b] / lmbda[a:b]
    return out


def max_step(u: np.ndarray, du: np.ndarray, dims: ConeDims) -> float:
    """Largest t with u + t*du in K (u strictly inside); inf if unbounded."""
    t_max = np.inf
    for a, b, soc in _blocks(dims):
        if soc:
            u0, u1 = u[a], u[a + 1 : b]
            d0, d1 = du[a], du[a + 1 : b]
            # boundary of (u0+t d0)^2 - ||u1+t d1||^2 = 0
            qa = d0 * d0 - d1 @ d1
            qb = 2.0 * (u0 * d0 - u1 @ d1)
            qc = u0 * u0 - u1 @ u1
            disc = qb * qb - 4.0 * qa * qc
            if disc >= 0.0:
                sq = np.sqrt(disc)
                for root in ((-qb - sq), (-qb + sq)):
                    if qa != 0.0:
                        t = root / (2.0 * qa)
                        if t > 0.0:
                            t_max = min(t_max, t)
                if qa == 0.0 and qb < 0.0:
                    t_max = min(t_max, -qc / qb)
            if d0 < 0.0:
                t_max = min(t_max, -u0 / d0)
        else:
            neg = du[a:b] < 0.0
            if np.any(neg):
                t_max = min(t_max, np.min(-u[a:b][neg] / du[a:b][neg]))
    return t_max


# -- Nesterov-Todd scaling -------------------------------------------------


@dataclass
class _Scaling:
    """Dense W and W^-1 for the full cone, plus the scaling point lambda.

    W is symmetric and satisfies W z = W^-1 s = lambda for the current
    iterate; for the orthant it is diag(sqrt(s/z)), for each SOC block the
    hyperbolic Householder form beta * (2 v v' - J).
    """

    W: np.ndarray
    Winv: np.ndarray
    lmbda: np.ndarray


def _nt_scaling(s: np.ndarray, z: np.ndarray, dims: ConeDims) -> _Scaling:
    m = dims.total
    W = np.zeros((m, m))
    Winv = np.zeros((m, m))
    lmbda = np.empty(m)
    for a, b, soc in _blocks(dims):
        sk, zk = s[a:b], z[a:b]
        if not soc:
            w = np.sqrt(sk / zk)
            W[a:b, a:b] = np.diag(w)
            Winv[a:b, a:b] = np.diag(1.0 / w)
            lmbda[a:b] = np.sqrt(sk * zk)
            continue
        aa = np.sqrt(sk[0] ** 2 - sk[1:] @ sk[1:])
        bb = np.sqrt(zk[0] ** 2 - zk[1:] @ zk[1:])
        beta = np.sqrt(aa / bb)
        gamma = np.sqrt((1.0 + (sk @ zk) / (aa * bb)) / 2.0)
        # NT point normalized to unit hyperbolic norm, then its square root:
        # W^2 = (aa/bb) * (2 wbar wbar' - J) satisfies W^2 z = s, and
        # W = beta * (2 v v' - J) with v = (wbar + e) / sqrt(2 (wbar0 + 1)).
        wbar = np.empty(b - a)
        wbar[0] = sk[0] / aa + zk[0] / bb
        wbar[1:] = sk[1:] / aa - zk[1:] / bb
        wbar /= 2.0 * gamma
        v = wbar.copy()
        v[0] += 1.0
        v /= np.sqrt(2.0 * (wbar[0] + 1.0))
        J = np.diag(np.concatenate(([1.0], -np.ones(b - a - 1))))
        Jv = J @ v
        W[a:b, a:b] = beta * (2.0 * np.outer(v, v) - J)
        Winv[a:b, a:b] = (2.0 * np.outer(Jv, Jv) - J) / beta
        lmbda[a:b] = W[a:b, a:b] @ zk
    return _Scaling(W=W, Winv=Winv, lmbda=lmbda)


# -- the solver ------------------------------------------------------------


# overflow on a diverging iterate is caught by the finiteness guards
@np.errstate(over="ignore", invalid="ignore")
def solve_conic(
    c: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    dims: ConeDims,
    A: np.ndarray | None = None,
    b: np.ndarray | None = None,
    feastol: float = 1e-9,
    abstol: float = 1e-10,
    reltol: float = 1e-9,
    max_iter: int = 100,
) -> ConicResult:
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    nx = c.size
    if A is None:
        A = np.zeros((0, nx))
        b = np.zeros(0)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    ny = b.size
    m = dims.total
    if G.shape != (m, nx) or A.shape != (ny, nx):
        raise ValueError("constraint matrix shapes disagree with dims")

    e = cone_identity(dims)
    rank = dims.rank

    def kkt_factor(Winv):
        Wi_G = Winv @ G
        K = np.zeros((nx + ny, nx + ny))
        K[:nx, :nx] = Wi_G.T @ Wi_G
        K[:nx, nx:] = A.T
        K[nx:, :nx] = A
        # static regularization keeps the factorization alive near degenerate
        # faces; the refinement pass corrects the perturbation
        K[: nx + ny, : nx + ny] += np.diag(
            np.concatenate([np.full(nx, 1e-12), np.full(ny, -1e-12)])
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            factor = scipy.linalg.lu_factor(K)
        return factor, Wi_G

    def kkt_solve(factor, Winv, Wi_G, rx, ry, rz_scaled):
        # eliminate dz from
        #   G'W^-2 G dx + A'dy = rx + G'W^-1 rz_scaled ; A dx = ry
        # where rz_scaled = W^-1 rz - lambda \ ds_target
        rhs = np.concatenate([rx + Wi_G.T @ rz_scaled, ry])
        sol = scipy.linalg.lu_solve(factor, rhs)
        # one round of iterative refinement on the reduced system
        resid = rhs - _reduced_apply(Wi_G, sol)
        sol = sol + scipy.linalg.lu_solve(factor, resid)
        if not np.all(np.isfinite(sol)):
            raise FloatingPointError("KKT solve produced non-finite values")
        dx, dy = sol[:nx], sol[nx:]
        dz = Winv @ (Wi_G @ dx - rz_scaled)
        return dx, dy, dz

    def _reduced_apply(Wi_G, vec):
        vx, vy = vec[:nx], vec[nx:]
        top = Wi_G.T @ (Wi_G @ vx) + A.T @ vy
        bot = A @ vx
        return np.concatenate([top, bot])

    # -- starting point: least-norm primal/dual estimates nudged into K
    try:
        factor0, Wi_G0 = kkt_factor(np.eye(m))
        dx, dy, dz = kkt_solve(
            factor0, np.eye(m), Wi_G0, np.zeros(nx), b, h.copy()
        )
        x, y = dx, dy
        s = h - G @ x
        me = min_eig(s, dims)
        if me <= 0.0:
            s = s + (1.0 + abs(me)) * e
        dx, dy, dz = kkt_solve(
            factor0, np.eye(m), Wi_G0, -c, np.zeros(ny), np.zeros(m)
        )
        z = dz
        me = min_eig(z, dims)
        if me <= 0.0:
            z = z + (1.0 + abs(me)) * e
    except (scipy.linalg.LinAlgError, FloatingPointError, ValueError):
        return ConicResult(
            x=np.full(nx, np.nan), s=np.full(m, np.nan), y=np.full(ny, np.nan),
            z=np.full(m, np.nan), status="numerical", iterations=0,
            gap=np.nan, pres=np.nan, dres=np.nan,
        )

    bnorm = max(1.0, np.linalg.norm(b))
    hnorm = max(1.0, np.linalg.norm(h))
    cnorm = max(1.0, np.linalg.norm(c))

    status = "max_iterations"
    it = 0
    for it in range(1, max_iter + 1):
        rd = c + A.T @ y + G.T @ z
        rp = A @ x - b
        rg = G @ x + s - h
        gap = s @ z
        mu = gap / rank
        pobj = c @ x
        pres = max(np.linalg.norm(rp) / bnorm, np.linalg.norm(rg) / hnorm)
        dres = np.linalg.norm(rd) / cnorm
        relgap = gap / max(1.0, abs(pobj))
        if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
            status = "optimal"
            break

        try:
            sc = _nt_scaling(s, z, dims)
            factor, Wi_G = kkt_factor(sc.Winv)

            # predictor: pure Newton direction toward the central path at 0
            target = -jordan_prod(sc.lmbda, sc.lmbda, dims)
            rz_scaled = sc.Winv @ (-rg) - jordan_div(sc.lmbda, target, dims)
            dxa, dya, dza = kkt_solve(factor, sc.Winv, Wi_G, -rd, -rp, rz_scaled)
            dsa = -rg - G @ dxa

            alpha_p = max_step(s, dsa, dims)
            alpha_d = max_step(z, dza, dims)
            alpha_aff = min(1.0, alpha_p, alpha_d)
            gap_aff = (s + alpha_aff * dsa) @ (z + alpha_aff * dza)
            sigma = max(0.0, min(1.0, gap_aff / gap)) ** 3

            # corrector with Mehrotra second-order term
            eta = jordan_prod(sc.Winv @ dsa, sc.W @ dza, dims)
            target = -jordan_prod(sc.lmbda, sc.lmbda, dims) - eta + sigma * mu * e
            scale = 1.0 - sigma
            rz_scaled = sc.Winv @ (-scale * rg) - jordan_div(sc.lmbda, target, dims)
            dx, dy, dz = kkt_solve(
                factor, sc.Winv, Wi_G, -scale * rd, -scale * rp, rz_scaled
            )
            ds = -scale * rg - G @ dx
        except (scipy.linalg.LinAlgError, FloatingPointError, ValueError):
            status = "numerical"
            break

        alpha = STEP_FRACTION * min(max_step(s, ds, dims), max_step(z, dz, dims))
        alpha = min(1.0, alpha)
        if not np.isfinite(alpha) or alpha <= 0.0:
            status = "numerical"
            break
        x_n, y_n = x + alpha * dx, y + alpha * dy
        z_n, s_n = z + alpha * dz, s + alpha * ds
        if min_eig(s_n, dims) <= 0.0 or min_eig(z_n, dims) <= 0.0:
            status = "numerical"
            break
        x, y, z, s = x_n, y_n, z_n, s_n

    rd = c + A.T @ y + G.T @ z
    rp = A @ x - b
    rg = G @ x + s - h
    gap = float(s @ z)
    pobj = float(c @ x)
    return ConicResult(
        x=x,
        s=s,
        y=y,
        z=z,
        status=status,
        iterations=it,
        gap=gap,
        pres=float(max(np.linalg.norm(rp) / bnorm, np.linalg.norm(rg) / hnorm)),
        dres=float(np.linalg.norm(rd) / cnorm),
        relgap=float(gap / max(1.0, abs(pobj))),
        pobj=pobj,
    )
