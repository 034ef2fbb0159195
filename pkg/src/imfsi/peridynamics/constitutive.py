"""Plane-stress J2 plasticity with a Jaumann (midpoint rotation) stress rate.

Stresses are stored in Voigt order (s11, s22, s12).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Ductile:
    eps_th: float = 0.18
    eps_cr: float = 0.2

    def __post_init__(self):
        if not self.eps_th < self.eps_cr:
            raise ValueError("eps_th must be below eps_cr")


@dataclass(frozen=True)
class Brittle:
    sigma_cr: float = 3e9

    def __post_init__(self):
        if self.sigma_cr <= 0:
            raise ValueError("sigma_cr must be positive")


@dataclass(frozen=True)
class SolidMaterial:
    """Isotropic elastoplastic solid; ``sigma_Y=inf`` gives pure elasticity."""

    E: float = 200e9
    nu: float = 0.29
    sigma_Y: float = np.inf
    H_hard: float = 0.0
    rho0: float = 7800.0
    failure: Ductile | Brittle | None = None

    def __post_init__(self):
        if self.E <= 0:
            raise ValueError("E must be positive")
        if not 0 < self.nu < 0.5:
            raise ValueError("nu must lie in (0, 0.5)")
        if self.sigma_Y <= 0:
            raise ValueError("sigma_Y must be positive")
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")

    @property
    def G(self) -> float:
        return self.E / (2 * (1 + self.nu))

    @property
    def dilatational_speed(self) -> float:
        """Plane-stress longitudinal wave speed."""
        return float(np.sqrt(self.E / (self.rho0 * (1 - self.nu**2))))


def voigt(s: np.ndarray) -> np.ndarray:
    return np.stack([s[..., 0, 0], s[..., 1, 1], s[..., 0, 1]], axis=-1)


def tensor(s: np.ndarray) -> np.ndarray:
    out = np.empty(s.shape[:-1] + (2, 2))
    out[..., 0, 0] = s[..., 0]
    out[..., 1, 1] = s[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = s[..., 2]
    return out


def von_mises(s: np.ndarray) -> np.ndarray:
    """Plane-stress equivalent stress of Voigt stresses."""
    return np.sqrt(s[..., 0] ** 2 - s[..., 0] * s[..., 1] + s[..., 1] ** 2 + 3 * s[..., 2] ** 2)


def max_principal(s: np.ndarray) -> np.ndarray:
    m = 0.5 * (s[..., 0] + s[..., 1])
    r = np.sqrt((0.5 * (s[..., 0] - s[..., 1])) ** 2 + s[..., 2] ** 2)
    return m + r


def rotate_jaumann(s: np.ndarray, L: np.ndarray, dt: float) -> np.ndarray:
    """Rotate stresses with the midpoint (Hughes-Winget) incremental rotation."""
    w = 0.5 * (L[..., 1, 0] - L[..., 0, 1]) * dt
    # Q = (I - W/2)^-1 (I + W/2) is a rotation by theta with tan(theta/2) = w/2
    den = 1 + 0.25 * w * w
    c = (1 - 0.25 * w * w) / den
    sn = w / den
    S = tensor(s)
    Q = np.empty_like(S)
    Q[..., 0, 0] = c
    Q[..., 0, 1] = -sn
    Q[..., 1, 0] = sn
    Q[..., 1, 1] = c
    return voigt(Q @ S @ np.swapaxes(Q, -1, -2))


def elastic_increment(mat: SolidMaterial, L: np.ndarray, dt: float) -> np.ndarray:
    d11 = L[..., 0, 0] * dt
    d22 = L[..., 1, 1] * dt
    d12 = 0.5 * (L[..., 0, 1] + L[..., 1, 0]) * dt
    k = mat.E / (1 - mat.nu**2)
    return np.stack([k * (d11 + mat.nu * d22), k * (d22 + mat.nu * d11), 2 * mat.G * d12], axis=-1)


def return_map(mat: SolidMaterial, trial: np.ndarray, eqps: np.ndarray, tol: float = 1e-12,
               max_iter: int = 50):
    """Plane-stress radial return with linear isotropic hardening.

    Solves the consistency condition for the plastic multiplier by Newton
    iteration on a scalar per point.
    """
    trial = np.asarray(trial, dtype=float)
    eqps = np.asarray(eqps, dtype=float)
    out = trial.copy()
    new_eqps = eqps.copy()
    if not np.isfinite(mat.sigma_Y):
        return out, new_eqps
    H = mat.H_hard
    q = von_mises(trial)
    kap = mat.sigma_Y + H * eqps
    yielding = q > kap * (1 + 1e-14)
    if not np.any(yielding):
        return out, new_eqps
    t = trial[yielding]
    e0 = eqps[yielding]
    a1 = (t[:, 0] + t[:, 1]) / SQRT2
    a2 = (t[:, 0] - t[:, 1]) / SQRT2
    A = a1**2 / 3
    B = a2**2 + 2 * t[:, 2] ** 2
    k1 = mat.E / (3 * (1 - mat.nu))
    k2 = 2 * mat.G
    dg = np.zeros(t.shape[0])
    for _ in range(max_iter):
        f1 = 1 + k1 * dg
        f2 = 1 + k2 * dg
        xi = A / f1**2 + B / f2**2
        dxi = -2 * A * k1 / f1**3 - 2 * B * k2 / f2**3
        sq = np.sqrt(2 * xi / 3)
        ep = e0 + dg * sq
        kk = mat.sigma_Y + H * ep
        f = 0.5 * xi - kk**2 / 3
        dep = sq + dg * dxi / (3 * sq)
        df = 0.5 * dxi - 2 / 3 * kk * H * dep
        step = f / df
        dg = dg - step
        if np.all(np.abs(f) <= tol * kk**2):
            break
    f1 = 1 + k1 * dg
    f2 = 1 + k2 * dg
    b1 = a1 / f1
    b2 = a2 / f2
    s = np.stack([(b1 + b2) / SQRT2, (b1 - b2) / SQRT2, t[:, 2] / f2], axis=-1)
    xi = b1**2 / 3 + b2**2 + 2 * s[:, 2] ** 2
    out[yielding] = s
    new_eqps[yielding] = e0 + dg * np.sqrt(2 * xi / 3)
    return out, new_eqps


def stress_update(mat: SolidMaterial, sigma: np.ndarray, eqps: np.ndarray, L: np.ndarray,
                  dt: float):
    """Objective hypoelastic-plastic update over one step.

    Parameters
    ----------
    sigma : (..., 3) Cauchy stress at the start of the step.
    eqps : (...,) equivalent plastic strain.
    L : (..., 2, 2) velocity gradient.

    Returns
    -------
    sigma_new, eqps_new
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rotated = rotate_jaumann(sigma, L, dt)
    trial = rotated + elastic_increment(mat, L, dt)
    return return_map(mat, trial, eqps)
