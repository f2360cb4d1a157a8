"""Independent reference implementations used only by the test suite.

These deliberately avoid the package's solver internals: the two-bus case is
a closed-form quadratic, and the general case runs a successive-substitution
sweep on complex phasors (voltages and currents) rather than on the squared
branch-flow variables.
"""

from __future__ import annotations

import math

import numpy as np


def two_bus_closed_form(r, x, p_inj, q_inj, v0=1.0):
    """Single line, net injection (p_inj, q_inj) at the far bus.

    Eliminating P = r*l - p_inj and Q = x*l - q_inj from l*v0 = P^2 + Q^2
    leaves one quadratic in l; the physical (high-voltage) branch is the
    smaller root. Returns (P, Q, l, v1).
    """
    a, b = -p_inj, -q_inj  # net consumption
    z2 = r * r + x * x
    if z2 == 0:
        raise ValueError("zero impedance")
    coef_b = 2.0 * (a * r + b * x) - v0
    coef_c = a * a + b * b
    disc = coef_b * coef_b - 4.0 * z2 * coef_c
    if disc < 0:
        raise ValueError("no real power-flow solution for this loading")
    l = (-coef_b - math.sqrt(disc)) / (2.0 * z2)
    P = a + r * l
    Q = b + x * l
    v1 = v0 - 2.0 * (r * P + x * Q) + z2 * l
    return P, Q, l, v1


def phasor_sweep(parent, r, x, p_inj, q_inj, v0=1.0, tol=1e-14, max_iter=500):
    """Backward/forward sweep on complex voltages and currents.

    parent[i] is the parent bus of bus i+1 (0 = substation). Injections are
    per non-root bus, generation positive. Returns (P, Q, l, v) in the
    squared-variable convention: P, Q, l per line (indexed by child bus),
    v per bus including the substation.
    """
    parent = np.asarray(parent, dtype=int)
    z = np.asarray(r, dtype=float) + 1j * np.asarray(x, dtype=float)
    s = np.asarray(p_inj, dtype=float) + 1j * np.asarray(q_inj, dtype=float)
    n = len(parent)

    depth = np.zeros(n + 1, dtype=int)
    for bus in range(1, n + 1):
        node, d = bus, 0
        while node != 0:
            node = parent[node - 1]
            d += 1
        depth[bus] = d
    deepest_first = sorted(range(1, n + 1), key=lambda b: -depth[b])
    shallowest_first = deepest_first[::-1]

    V = np.full(n + 1, complex(math.sqrt(v0)))
    I = np.zeros(n, dtype=complex)  # branch current into each child bus
    for _ in range(max_iter):
        # backward: draw currents from the latest voltages, fold children
        # into parents (deepest first, so subtrees are complete when read)
        I_new = -np.conj(s / V[1:])
        for bus in deepest_first:
            par = parent[bus - 1]
            if par != 0:
                I_new[par - 1] += I_new[bus - 1]
        # forward: voltage drops from the substation outwards
        V_new = V.copy()
        for bus in shallowest_first:
            V_new[bus] = V_new[parent[bus - 1]] - z[bus - 1] * I_new[bus - 1]
        delta = max(np.max(np.abs(V_new - V)), np.max(np.abs(I_new - I)))
        V, I = V_new, I_new
        if delta < tol:
            break
    else:
        raise RuntimeError("phasor sweep did not converge")

    l = np.abs(I) ** 2
    v = np.abs(V) ** 2
    S_front = np.array([V[parent[i]] * np.conj(I[i]) for i in range(n)])
    return S_front.real, S_front.imag, l, v


# -- truncated-Gaussian references (quadrature, no scipy.special) ----------


def _gauss_density(mu, sigma):
    norm = sigma * math.sqrt(2.0 * math.pi)
    return lambda x: math.exp(-0.5 * ((x - mu) / sigma) ** 2) / norm


def trunc_mass_quad(mu, sigma, lo, hi):
    """Normalizer of the truncated Gaussian by adaptive quadrature."""
    from scipy.integrate import quad

    mass, _ = quad(_gauss_density(mu, sigma), lo, hi, epsabs=1e-14, epsrel=1e-12)
    return mass


def trunc_logpdf_quad(q, mu, sigma, lo, hi):
    """1-D truncated-normal log-density with a quadrature normalizer."""
    t = (q - mu) / sigma
    return (
        -0.5 * t * t
        - math.log(sigma * math.sqrt(2.0 * math.pi))
        - math.log(trunc_mass_quad(mu, sigma, lo, hi))
    )


def trunc_moments_quad(mu, sigma, lo, hi):
    """Mean and standard deviation of the truncated Gaussian by quadrature."""
    from scipy.integrate import quad

    dens = _gauss_density(mu, sigma)
    mass = trunc_mass_quad(mu, sigma, lo, hi)
    m1, _ = quad(lambda x: x * dens(x), lo, hi, epsabs=1e-14, epsrel=1e-12)
    m1 /= mass
    var, _ = quad(
        lambda x: (x - m1) ** 2 * dens(x), lo, hi, epsabs=1e-14, epsrel=1e-12
    )
    return m1, math.sqrt(var / mass)


def dmu_expectation_quad(f, mu, sigma, lo, hi, h=1e-5):
    """d/dmu of E[f(q)] under the truncated Gaussian, by central difference
    of quadrature integrals (step h, error O(h^2))."""
    from scipy.integrate import quad

    def expect(m):
        dens = _gauss_density(m, sigma)
        mass = trunc_mass_quad(m, sigma, lo, hi)
        val, _ = quad(
            lambda x: f(x) * dens(x), lo, hi, epsabs=1e-14, epsrel=1e-12
        )
        return val / mass

    return (expect(mu + h) - expect(mu - h)) / (2.0 * h)
