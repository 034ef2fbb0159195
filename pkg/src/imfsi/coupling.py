"""Fluid-solid coupling: interpolation constraint and volumetric velocity penalty."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .flow import NV, FluidMaterial, assemble_point_residual
from .spline import OutOfDomainError, SplineSpace2D, eval_basis, scatter

VEL = slice(1, 3)


class SolidEscapedError(OutOfDomainError):
    """A foreground node left the background domain."""


@dataclass
class InterpolationOperator:
    """Background basis values at the foreground node positions."""

    idx: np.ndarray
    N: np.ndarray
    dN: np.ndarray
    n_cp: int

    def apply(self, field: np.ndarray) -> np.ndarray:
        """Interpolate a control-point field (n_cp, k) to the nodes."""
        return np.einsum("na,nak->nk", self.N, field[self.idx])

    def distribute(self, values: np.ndarray) -> np.ndarray:
        """Adjoint of ``apply``: nodal values (n, k) -> control points (n_cp, k)."""
        local = self.N[:, :, None] * values[:, None, :]
        return scatter(self.idx.ravel(), local.reshape(-1, values.shape[1]), self.n_cp)

    def matrix(self) -> sp.csr_matrix:
        n = self.idx.shape[0]
        rows = np.repeat(np.arange(n), self.idx.shape[1])
        return sp.csr_matrix((self.N.ravel(), (rows, self.idx.ravel())), shape=(n, self.n_cp))

    @property
    def basis(self):
        return self.idx, self.N, self.dN


def build_interpolation(space: SplineSpace2D, x: np.ndarray, t: float | None = None
                        ) -> InterpolationOperator:
    x = np.asarray(x, dtype=float)
    inside = space.contains(x)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        when = "" if t is None else f" at t={t:.6e} s"
        raise SolidEscapedError(f"PD node {bad} at {x[bad].tolist()} left the background "
                                f"domain{when}")
    idx, N, dN = eval_basis(space, x)
    return InterpolationOperator(idx, N, dN, space.n_cp)


# ---------------------------------------------------------------- strong coupling

def strong_couple_residual(space: SplineSpace2D, interp: InterpolationOperator, x: np.ndarray,
                           volume: np.ndarray, Y: np.ndarray, Yt: np.ndarray,
                           fluid_residual: np.ndarray, solid_residual: np.ndarray,
                           mat: FluidMaterial, dt=None, floors=None, supg=True, dc=True):
    """Combined background residual for the constrained formulation.

    ``fluid_residual`` holds the fluid forms over the whole background
    (mass term included); the same forms evaluated with the PD nodes as
    quadrature points are removed and the solid residual (N per node,
    momentum slots) is added through the transpose of the interpolation.
    Also returns the A0 blocks of the removed quadrature for the mass.
    """
    Rs, blocks = assemble_point_residual(space, x, volume, Y, Yt, mat, dt, floors, supg, dc,
                                         include_mass=True, basis=interp.basis)
    R = fluid_residual - Rs
    R[:, VEL] += interp.distribute(solid_residual)
    return R, blocks


def strong_couple_mass(fluid_blocks: np.ndarray, removed_blocks: np.ndarray,
                       interp: InterpolationOperator, mass: np.ndarray) -> np.ndarray:
    """Lumped 4x4 blocks of the combined problem.

    Fluid mass over the solid region is removed from the momentum rows only,
    so the pressure and temperature rows keep a nonsingular fluid mass.
    """
    M = fluid_blocks.copy()
    M[:, VEL, :] -= removed_blocks[:, VEL, :]
    m = interp.distribute(mass[:, None])[:, 0]
    M[:, 1, 1] += m
    M[:, 2, 2] += m
    return M


# ---------------------------------------------------------------- weak coupling

@dataclass(frozen=True)
class PenaltyConfig:
    beta: float = 1.0
    use_damage_scaling: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def penalty_coefficient(E, damage, h, dt, config: PenaltyConfig):
    """C_pen = beta E dt / h^2, optionally scaled by (1 - d)."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0) or dt <= 0:
        raise ValueError("h and dt must be positive")
    c = config.beta * E * dt / h**2
    if config.use_damage_scaling:
        d = np.asarray(damage, dtype=float)
        if np.any((d < 0) | (d > 1)):
            raise ValueError("damage must lie in [0, 1]")
        c = c * (1.0 - d)
    return c


@dataclass
class CouplingForces:
    """Penalty forces: background residual contribution (n_cp, 4), solid nodal
    forces (n, 2) in N, and diagnostics."""

    background: np.ndarray
    solid: np.ndarray
    total: np.ndarray
    power: float


def weak_couple_forces(interp: InterpolationOperator, Y: np.ndarray, v_solid: np.ndarray,
                       volume: np.ndarray, c_pen: np.ndarray) -> CouplingForces:
    """Volumetric velocity penalty evaluated with PD nodal quadrature.

    The background entry is a residual contribution (its negative is the
    force on the fluid); ``solid`` is the force on each node in N, so
    ``background.sum(0)[1:3] == solid.sum(0)``.
    """
    dv = interp.apply(Y[:, VEL]) - v_solid
    f = (c_pen * volume)[:, None] * dv
    bg = np.zeros((interp.n_cp, NV))
    bg[:, VEL] = interp.distribute(f)
    power = float(np.sum(c_pen * volume * np.sum(dv * dv, axis=1)))
    return CouplingForces(bg, f, f.sum(axis=0), power)
