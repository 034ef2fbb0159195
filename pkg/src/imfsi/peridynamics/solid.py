"""Correspondence internal forces, bond state and damage for the PD solid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import Brittle, Ductile, SolidMaterial, max_principal, stress_update, tensor
from .family import BondGradient, Family, build_families
from .nodes import PDNodeSet

HORIZON_FACTOR = 2.5


@dataclass
class BondState:
    """Per-bond committed stress history and failure data."""

    sigma: np.ndarray
    eqps: np.ndarray
    degradation: np.ndarray
    broken: np.ndarray

    @classmethod
    def initial(cls, n_bonds: int, prestress=None) -> "BondState":
        sigma = np.zeros((n_bonds, 3))
        if prestress is not None:
            sigma[:] = prestress
        return cls(sigma, np.zeros(n_bonds), np.ones(n_bonds), np.zeros(n_bonds, dtype=bool))


def deformation_gradient(op: BondGradient, x: np.ndarray) -> np.ndarray:
    return op.gradient(x)


def bond_velocity_gradient(op: BondGradient, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """L = Fdot F^-1 for every bond; inactive bonds get zero."""
    F, Fd = op.gradient(x, v)
    L = np.zeros_like(F)
    a = op.active
    L[a] = Fd[a] @ np.linalg.inv(F[a])
    return L


def bond_coefficients(nodes: PDNodeSet, family: Family) -> np.ndarray:
    """V_P V_Q w_PQ with w_PQ normalising the reference family volume of P to one."""
    V = nodes.volume
    fam_vol = np.bincount(family.owner, weights=V[family.nbr], minlength=family.n_nodes)
    return V[family.owner] * V[family.nbr] / fam_vol[family.owner]


def force_state(op: BondGradient, coeff: np.ndarray, x: np.ndarray, sigma: np.ndarray,
                factor: np.ndarray | None = None) -> np.ndarray:
    """Per-bond first Piola-Kirchhoff stress weighted by the bond measure.

    The returned (n_bonds, 2, 2) array ``T`` carries the bond's share of the
    stress power; nodal forces follow from the adjoint of the bond gradient
    (``assemble_pd_internal_force``). Inactive bonds carry zero.
    """
    F = op.gradient(x)
    T = np.zeros_like(F)
    a = op.active
    Fa = F[a]
    J = np.linalg.det(Fa)
    Finv_T = np.swapaxes(np.linalg.inv(Fa), -1, -2)
    c = coeff[a] if factor is None else coeff[a] * factor[a]
    T[a] = (c * J)[:, None, None] * (tensor(sigma[a]) @ Finv_T)
    return T


def assemble_pd_internal_force(op: BondGradient, T: np.ndarray) -> np.ndarray:
    """Nodal internal forces (N) as the negative derivative of the stress power."""
    return -op.transpose_apply(T)


def nodal_damage(nodes: PDNodeSet, family: Family, degradation: np.ndarray) -> np.ndarray:
    V = nodes.volume
    g = np.where(family.intact, degradation, 0.0)
    kept = np.bincount(family.owner, weights=V[family.nbr] * g, minlength=family.n_nodes)
    total = np.bincount(family.owner, weights=V[family.nbr], minlength=family.n_nodes)
    return np.clip(1.0 - kept / total, 0.0, 1.0)


def _symmetrise_break(family: Family, broken: np.ndarray) -> np.ndarray:
    return broken | broken[family.reverse]


def update_damage_ductile(family: Family, state: BondState, failure: Ductile):
    """Linear degradation between eps_th and eps_cr; bonds break at eps_cr.

    Returns the indices of newly broken bonds.
    """
    e = state.eqps
    g = np.clip((failure.eps_cr - e) / (failure.eps_cr - failure.eps_th), 0.0, 1.0)
    g = np.minimum(g, g[family.reverse])
    state.degradation = np.minimum(state.degradation, g)
    new = _symmetrise_break(family, e >= failure.eps_cr) & ~state.broken
    return _commit_breaks(family, state, new)


def update_damage_brittle(family: Family, state: BondState, failure: Brittle):
    """Break bonds whose maximum principal stress exceeds sigma_cr (irreversible)."""
    new = _symmetrise_break(family, max_principal(state.sigma) > failure.sigma_cr) & ~state.broken
    return _commit_breaks(family, state, new)


def _commit_breaks(family: Family, state: BondState, new: np.ndarray):
    state.broken |= new
    state.degradation[state.broken] = 0.0
    family.intact &= ~state.broken
    return np.flatnonzero(new)


class PDSolid:
    """Meshfree correspondence solid with per-bond stress history.

    Parameters
    ----------
    nodes : PDNodeSet
    material : SolidMaterial
    delta : float, optional
        Horizon; defaults to ``2.5 * max spacing``.
    prestress : array_like (3,), optional
        Initial Voigt stress on all bonds.
    """

    def __init__(self, nodes: PDNodeSet, material: SolidMaterial, delta: float | None = None,
                 prestress=None):
        self.nodes = nodes
        self.material = material
        if delta is None:
            delta = HORIZON_FACTOR * float(np.max(nodes.spacing))
        self.family = build_families(nodes, delta)
        self.op = BondGradient(nodes, self.family)
        self.coeff = bond_coefficients(nodes, self.family)
        self.state = BondState.initial(self.family.n_bonds, prestress)
        self.damage = np.zeros(len(nodes))

    @property
    def mass(self) -> np.ndarray:
        return self.nodes.mass

    def trial(self, x: np.ndarray, v: np.ndarray, dt: float):
        """Stress and plastic strain after a step with the velocity field ``v``."""
        L = bond_velocity_gradient(self.op, x, v)
        return stress_update(self.material, self.state.sigma, self.state.eqps, L, dt)

    def evaluate(self, x: np.ndarray, v: np.ndarray, dt: float, backend: str = "numba"):
        """Trial stress update and internal forces in one pass.

        Returns (force (n, 2) in N, trial sigma, trial eqps).
        """
        op = self.op
        F, Fd = op.gradient(x, v)
        a = op.active
        coeff = self.coeff * self.state.degradation
        if backend == "numba":
            from ._kernels import bond_update

            if dt <= 0:
                raise ValueError("dt must be positive")
            m = self.material
            T, sigma, eqps = bond_update(F, Fd, a, coeff, self.state.sigma, self.state.eqps,
                                         m.E, m.nu, m.sigma_Y, m.H_hard, dt, 1e-12, 50)
            return assemble_pd_internal_force(op, T), sigma, eqps
        Finv = np.linalg.inv(F[a])
        L = np.zeros_like(F)
        L[a] = Fd[a] @ Finv
        sigma, eqps = stress_update(self.material, self.state.sigma, self.state.eqps, L, dt)
        T = np.zeros_like(F)
        c = coeff[a] * np.linalg.det(F[a])
        T[a] = c[:, None, None] * (tensor(sigma[a]) @ np.swapaxes(Finv, -1, -2))
        return assemble_pd_internal_force(op, T), sigma, eqps

    def internal_force(self, x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        T = force_state(self.op, self.coeff, x, sigma, self.state.degradation)
        return assemble_pd_internal_force(self.op, T)

    def commit(self, sigma: np.ndarray, eqps: np.ndarray) -> np.ndarray:
        """Store the converged bond state, update damage; return newly broken bonds."""
        s = self.state
        s.sigma = np.where(s.broken[:, None], 0.0, sigma)
        s.eqps = np.maximum(s.eqps, eqps)
        fail = self.material.failure
        if isinstance(fail, Ductile):
            new = update_damage_ductile(self.family, s, fail)
        elif isinstance(fail, Brittle):
            new = update_damage_brittle(self.family, s, fail)
        else:
            new = np.empty(0, dtype=int)
        if new.size:
            s.sigma[s.broken] = 0.0
            self.op.rebuild()
        self.damage = np.maximum(self.damage, nodal_damage(self.nodes, self.family,
                                                           s.degradation))
        return new

    def nodal_plastic_strain(self) -> np.ndarray:
        fam = self.family
        num = np.bincount(fam.owner, weights=self.state.eqps, minlength=fam.n_nodes)
        return num / np.maximum(fam.counts(), 1)
