"""Jointly optimal inverter setpoints via second-order cone relaxation.

The nonconvex branch-flow equality ell = (P^2 + Q^2) / v_parent is relaxed to
the inequality ell >= (P^2 + Q^2) / v_parent, written as a standard cone

    || (2P, 2Q, ell - v_parent) ||  <=  ell + v_parent

which avoids dividing by v. Minimizing line loss over this convex set gives a
lower bound on the achievable loss; when every cone is tight at the optimum
(checked by exactness_check) the relaxed point is an actual operating point
and the bound is attained.

A brute-force action-grid oracle is included for cross-validation on feeders
with at most three inverters, plus an elastic re-solve that diagnoses genuine
voltage infeasibility instead of failing opaquely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConeDims, solve_conic
from .errors import (
    Infeasible,
    MaxIterations,
    NoFeasiblePoint,
    NumericalError,
    TooManyInverters,
)
from .network import GridState, NetworkModel
from .powerflow import PowerFlowSolution, evaluate_loss

GRID_ORACLE_MAX_INVERTERS = 3


@dataclass
class SolverOptions:
    kkt_tol: float = 1e-8
    feas_tol: float = 1e-8
    exact_tol: float = 1e-6
    obj_tol: float = 1e-8
    max_iter: int = 100


@dataclass
class OpfSolution:
    """Relaxation optimum plus certificates."""

    q_g_star: np.ndarray
    flows: PowerFlowSolution
    objective: float
    cone_residuals: np.ndarray  # (P^2+Q^2)/v_parent - ell per line, <= 0 feasible
    exact: bool
    kkt_residual: float


@dataclass
class ExactnessReport:
    slacks: np.ndarray
    max_slack: float
    exact: bool


def _cone_slacks(model: NetworkModel, P, Q, ell, v) -> np.ndarray:
    vpar = v[model.parent]
    return (P**2 + Q**2) / vpar - ell


def _build_program(model: NetworkModel, state: GridState, elastic: bool):
    """Assemble (c, G, h, dims, A, b) for the relaxed loss minimization.

    Variable layout: [q_g (M), P (N), Q (N), ell (N), v (N), (u (N) if
    elastic)]. The elastic variant relaxes the voltage band by a nonnegative
    per-bus slack u and minimizes its sum, which measures infeasibility.
    """
    n, m = model.n, model.n_inverters
    iq, iP, iQ, iL, iV = 0, m, m + n, m + 2 * n, m + 3 * n
    nx = m + 4 * n + (n if elastic else 0)
    iU = m + 4 * n

    A = np.zeros((3 * n, nx))
    b = np.zeros(3 * n)
    for ln in model.lines:
        i = ln.bus - 1
        kids = [mm.bus - 1 for mm in model.lines if mm.parent == ln.bus]
        # active balance: P_i - sum(P_kids) - r ell = -p
        A[i, iP + i] = 1.0
        for k in kids:
            A[i, iP + k] = -1.0
        A[i, iL + i] = -ln.r
        b[i] = -state.p[i]
        # reactive balance: Q_i - sum(Q_kids) - x ell + q_g(at bus) = q_c
        A[n + i, iQ + i] = 1.0
        for k in kids:
            A[n + i, iQ + k] = -1.0
        A[n + i, iL + i] = -ln.x
        b[n + i] = state.q_c[i]
        # voltage drop: v_i - v_parent + 2rP + 2xQ - (r^2+x^2) ell = 0
        A[2 * n + i, iV + i] = 1.0
        A[2 * n + i, iP + i] = 2.0 * ln.r
        A[2 * n + i, iQ + i] = 2.0 * ln.x
        A[2 * n + i, iL + i] = -(ln.r**2 + ln.x**2)
        if ln.parent == 0:
            b[2 * n + i] = model.v0
        else:
            A[2 * n + i, iV + ln.parent - 1] = -1.0
    for j, inv in enumerate(model.inverters):
        A[n + inv.bus - 1, iq + j] += 1.0

    n_orth = 2 * m + 2 * n + (n if elastic else 0)
    rows = []
    h_rows = []

    def orth_row(cols, rhs):
        row = np.zeros(nx)
        for col, val in cols:
            row[col] = val
        rows.append(row)
        h_rows.append(rhs)

    for j in range(m):
        orth_row([(iq + j, 1.0)], model.q_hi[j])
    for j in range(m):
        orth_row([(iq + j, -1.0)], -model.q_lo[j])
    for i in range(n):
        cols = [(iV + i, 1.0)] + ([(iU + i, -1.0)] if elastic else [])
        orth_row(cols, model.v_max[i + 1])
    for i in range(n):
        cols = [(iV + i, -1.0)] + ([(iU + i, -1.0)] if elastic else [])
        orth_row(cols, -model.v_min[i + 1])
    if elastic:
        for i in range(n):
            orth_row([(iU + i, -1.0)], 0.0)

    for ln in model.lines:
        i = ln.bus - 1
        root = ln.parent == 0
        vcol = None if root else iV + ln.parent - 1
        # (ell + v_par, 2P, 2Q, ell - v_par) in the second-order cone
        orth_row([(iL + i, -1.0)] + ([] if root else [(vcol, -1.0)]),
                 model.v0 if root else 0.0)
        orth_row([(iP + i, -2.0)], 0.0)
        orth_row([(iQ + i, -2.0)], 0.0)
        orth_row([(iL + i, -1.0)] + ([] if root else [(vcol, 1.0)]),
                 -model.v0 if root else 0.0)

    G = np.array(rows)
    h = np.array(h_rows)
    dims = ConeDims(nonneg=n_orth, soc=(4,) * n)

    c = np.zeros(nx)
    if elastic:
        c[iU : iU + n] = 1.0
    else:
        c[iL : iL + n] = model.r
    return c, G, h, dims, A, b


def _extract(model: NetworkModel, x: np.ndarray, kkt_residual: float,
             iterations: int, exact_tol: float) -> OpfSolution:
    n, m = model.n, model.n_inverters
    q_g = x[:m].copy()
    P = x[m : m + n].copy()
    Q = x[m + n : m + 2 * n].copy()
    ell = x[m + 2 * n : m + 3 * n].copy()
    v = np.concatenate(([model.v0], x[m + 3 * n : m + 4 * n]))
    loss = float(model.r @ ell)
    slacks = _cone_slacks(model, P, Q, ell, v)
    flows = PowerFlowSolution(
        P=P, Q=Q, ell=ell, v=v, loss=loss, iterations=iterations,
        converged=True, max_residual=kkt_residual,
    )
    return OpfSolution(
        q_g_star=q_g,
        flows=flows,
        objective=loss,
        cone_residuals=slacks,
        exact=bool(np.max(np.abs(slacks)) <= exact_tol) if n else True,
        kkt_residual=kkt_residual,
    )


def solve_baseline(
    model: NetworkModel, state: GridState, opts: SolverOptions | None = None
) -> OpfSolution:
    """Minimize total line loss over inverter setpoints and the voltage band."""
    opts = opts or SolverOptions()
    c, G, h, dims, A, b = _build_program(model, state, elastic=False)
    res = solve_conic(c, G, h, dims, A, b, max_iter=opts.max_iter)
    if res.meets(opts.kkt_tol):
        kkt = max(res.pres, res.dres, res.relgap)
        return _extract(model, res.x, kkt, res.iterations, opts.exact_tol)

    # primary solve failed: measure how infeasible the band really is
    ce, Ge, he, dimse, Ae, be = _build_program(model, state, elastic=True)
    rese = solve_conic(ce, Ge, he, dimse, Ae, be, max_iter=opts.max_iter)
    if not rese.meets(opts.kkt_tol):
        raise NumericalError(
            f"conic solver failed on both primary ({res.status}) and "
            f"elastic ({rese.status}) problems"
        )
    n, m = model.n, model.n_inverters
    u = rese.x[m + 4 * n :]
    max_violation = float(np.max(u)) if n else 0.0
    if max_violation > opts.feas_tol:
        raise Infeasible(
            f"voltage band unattainable; best effort violates it by "
            f"{max_violation:.3e} (squared per-unit)",
            max_violation=max_violation,
            least_violating=rese.x[:m].copy(),
        )
    raise MaxIterations(
        f"relaxation is feasible but the solver stalled ({res.status}, "
        f"pres {res.pres:.2e}, dres {res.dres:.2e}, relgap {res.relgap:.2e})"
    )


def grid_search_oracle(
    model: NetworkModel, state: GridState, points_per_axis: int
) -> OpfSolution:
    """Exhaustive evaluation of the exact power flow over an action grid.

    Violating points are rejected outright; ties break toward the
    lexicographically smallest action so results are order-independent.
    """
    m = model.n_inverters
    if m > GRID_ORACLE_MAX_INVERTERS:
        raise TooManyInverters(
            f"grid oracle is exponential in inverters; got {m} > "
            f"{GRID_ORACLE_MAX_INVERTERS}"
        )
    if points_per_axis < 3:
        raise ValueError("points_per_axis must be at least 3")
    axes = [
        np.linspace(model.q_lo[j], model.q_hi[j], points_per_axis)
        for j in range(m)
    ]
    best = None
    grid = np.meshgrid(*axes, indexing="ij") if m else []
    actions = (
        np.stack([g.ravel() for g in grid], axis=1)
        if m
        else np.zeros((1, 0))
    )
    for action in actions:
        ev = evaluate_loss(model, state, action)
        if not ev.feasible:
            continue
        key = (ev.objective, tuple(action))
        if best is None or key < best[0]:
            best = (key, action, ev)
    if best is None:
        raise NoFeasiblePoint(
            f"no voltage-feasible action on a {points_per_axis}^{m} grid"
        )
    _, action, ev = best
    sol = ev.solution
    slacks = _cone_slacks(model, sol.P, sol.Q, sol.ell, sol.v)
    return OpfSolution(
        q_g_star=np.asarray(action, dtype=float),
        flows=sol,
        objective=ev.objective,
        cone_residuals=slacks,
        exact=True,
        kkt_residual=0.0,
    )


def exactness_check(sol: OpfSolution, exact_tol: float = 1e-6) -> ExactnessReport:
    """Certify that every relaxed cone is tight at the returned point."""
    slacks = np.asarray(sol.cone_residuals, dtype=float)
    max_slack = float(np.max(np.abs(slacks))) if slacks.size else 0.0
    return ExactnessReport(
        slacks=slacks, max_slack=max_slack, exact=max_slack <= exact_tol
    )


# CSV surface consumed by the command-line compare/baseline paths


def trace_header(model: NetworkModel) -> list[str]:
    qcols = [f"q_g_{model.labels[inv.bus]}" for inv in model.inverters]
    return ["t", "objective", "exact", "max_cone_slack"] + qcols


def solution_row(t: int, sol: OpfSolution) -> list:
    max_slack = (
        float(np.max(np.abs(sol.cone_residuals))) if sol.cone_residuals.size else 0.0
    )
    return [t, sol.objective, int(sol.exact), max_slack] + [
        float(q) for q in sol.q_g_star
    ]
