"""Reference solutions used by the tests and exposed on the command line."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


@dataclass(frozen=True)
class GasState:
    rho: float
    u: float
    p: float


def _f_and_speed(p, s: GasState, gamma):
    """Velocity change across a wave from state ``s`` to pressure ``p``."""
    c = np.sqrt(gamma * s.p / s.rho)
    if p > s.p:
        A = 2 / ((gamma + 1) * s.rho)
        B = (gamma - 1) / (gamma + 1) * s.p
        return (p - s.p) * np.sqrt(A / (p + B))
    return 2 * c / (gamma - 1) * ((p / s.p) ** ((gamma - 1) / (2 * gamma)) - 1)


def star_state(left: GasState, right: GasState, gamma: float = 1.4):
    """Pressure and velocity between the two nonlinear waves."""
    du = right.u - left.u

    def g(p):
        return _f_and_speed(p, left, gamma) + _f_and_speed(p, right, gamma) + du

    hi = max(left.p, right.p)
    while g(hi) < 0:
        hi *= 2
    p = brentq(g, 1e-12 * hi, hi, xtol=1e-14 * hi, rtol=1e-14, maxiter=500)
    u = 0.5 * (left.u + right.u) + 0.5 * (_f_and_speed(p, right, gamma)
                                         - _f_and_speed(p, left, gamma))
    return p, u


def riemann(left: GasState, right: GasState, xi, gamma: float = 1.4):
    """Exact self-similar solution sampled at ``xi = (x - x0) / t``.

    Returns arrays (rho, u, p).
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    ps, us = star_state(left, right, gamma)
    g1 = (gamma - 1) / (gamma + 1)
    out = np.empty((3, xi.size))
    for k, s in enumerate(xi):
        if s <= us:
            st, sign = left, 1.0
        else:
            st, sign = right, -1.0
        c = np.sqrt(gamma * st.p / st.rho)
        if ps > st.p:
            # shock
            S = st.u - sign * c * np.sqrt((gamma + 1) / (2 * gamma) * ps / st.p
                                          + (gamma - 1) / (2 * gamma))
            if sign * (s - S) <= 0:
                out[:, k] = st.rho, st.u, st.p
            else:
                r = st.rho * (ps / st.p + g1) / (g1 * ps / st.p + 1)
                out[:, k] = r, us, ps
        else:
            # rarefaction
            rs = st.rho * (ps / st.p) ** (1 / gamma)
            cs = c * (ps / st.p) ** ((gamma - 1) / (2 * gamma))
            head = st.u - sign * c
            tail = us - sign * cs
            if sign * (s - head) <= 0:
                out[:, k] = st.rho, st.u, st.p
            elif sign * (s - tail) >= 0:
                out[:, k] = rs, us, ps
            else:
                u = 2 / (gamma + 1) * (sign * c + (gamma - 1) / 2 * st.u + s)
                cf = sign * (u - s)
                r = st.rho * (cf / c) ** (2 / (gamma - 1))
                out[:, k] = r, u, st.p * (cf / c) ** (2 * gamma / (gamma - 1))
    return out[0], out[1], out[2]


SOD_LEFT = GasState(1.0, 0.0, 1.0)
SOD_RIGHT = GasState(0.125, 0.0, 0.1)


def sod(x, t: float, x0: float = 0.5, gamma: float = 1.4):
    """Sod shock tube solution at time ``t``."""
    return riemann(SOD_LEFT, SOD_RIGHT, (np.asarray(x) - x0) / t, gamma)


def j2_uniaxial(strain, E: float, sigma_Y: float, H: float):
    """Monotonic uniaxial stress with linear isotropic hardening.

    Returns (stress, equivalent plastic strain) for total strains ``strain``.
    """
    eps = np.asarray(strain, dtype=float)
    ey = sigma_Y / E
    Et = E * H / (E + H)
    sig = np.where(eps <= ey, E * eps, sigma_Y + Et * (eps - ey))
    ep = np.where(eps <= ey, 0.0, (sig - sigma_Y) / H if H > 0 else eps - ey)
    return sig, ep


def elastoplastic_tangent(E: float, H: float) -> float:
    return E * H / (E + H)
