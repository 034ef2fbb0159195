"""Coupled background/foreground physics driven by the integrator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import (VEL, PenaltyConfig, build_interpolation, penalty_coefficient,
                       strong_couple_mass, strong_couple_residual, weak_couple_forces)
from .flow import (AssemblyStats, FluidBC, FluidMaterial, _boundary_flux, density, fluid_terms,
                   slip_dofs)
from .integrator import CoupledState, IntegratorConfig, Levels, newmark_positions
from .peridynamics import PDSolid
from .spline import QuadratureRule, SplineSpace2D, build_quadrature


@dataclass
class FluidSetup:
    space: SplineSpace2D
    mat: FluidMaterial
    bcs: FluidBC = field(default_factory=FluidBC)
    quad: QuadratureRule | None = None
    floors: tuple | None = None
    supg: bool = True
    dc: bool = True
    source: object = None
    backend: str = "numba"

    def __post_init__(self):
        if self.quad is None:
            self.quad = build_quadrature(self.space)
        self.slip = slip_dofs(self.space, self.bcs)
        self.nu = np.zeros(self.quad.weights.shape)

    def terms(self, Y, Yt, dt, stats=None, freeze_nu: bool = False):
        """Residual with the lumped mass term and boundary fluxes, plus the mass blocks.

        The DC viscosity is stored in ``self.nu``; ``freeze_nu`` reuses the
        stored values instead of recomputing them.
        """
        R, M = fluid_terms(self.space, self.quad, Y, Yt, self.mat, self.source, None, dt,
                           self.floors, self.supg, self.dc, stats, self.backend, self.nu,
                           freeze_nu)
        R += (M @ Yt[:, :, None])[:, :, 0]
        R += _boundary_flux(self.space, self.bcs, Y)
        return R, M


def solve_blocks(M: np.ndarray, R: np.ndarray, slip) -> np.ndarray:
    """Return -M^-1 R per control point with constrained components held at zero."""
    M = M.copy()
    R = R.copy()
    cps, comps = slip
    M[cps, comps, :] = 0.0
    M[cps, comps, comps] = 1.0
    R[cps, comps] = 0.0
    return -np.linalg.solve(M, R[:, :, None])[:, :, 0]


@dataclass
class Diagnostics:
    penalty_force: np.ndarray = field(default_factory=lambda: np.zeros(2))
    penalty_power: float = 0.0
    stats: AssemblyStats = field(default_factory=AssemblyStats)


class CoupledProblem:
    """Physics callbacks for fluid-only, solid-only, strong or weak coupled runs.

    Parameters
    ----------
    fluid : FluidSetup or None
    solid : PDSolid or None
    coupling : {"strong", "weak", None}
    penalty : PenaltyConfig, used with weak coupling.
    """

    def __init__(self, fluid: FluidSetup | None, solid: PDSolid | None,
                 coupling: str | None = None, penalty: PenaltyConfig | None = None):
        if coupling not in (None, "strong", "weak"):
            raise ValueError(f"unknown coupling {coupling!r}")
        if coupling is not None and (fluid is None or solid is None):
            raise ValueError("coupling requires both a fluid and a solid")
        self.fluid = fluid
        self.solid = solid
        self.coupling = coupling
        self.penalty = penalty or PenaltyConfig()
        self.diag = Diagnostics()
        self._trial = None

    # -- state helpers
    def initial_state(self, Y0=None, v0=None, t: float = 0.0) -> CoupledState:
        st = CoupledState(t=t)
        if self.fluid is not None:
            st.Y = np.array(Y0, dtype=float)
            st.Yt = np.zeros_like(st.Y)
        if self.solid is not None:
            nodes = self.solid.nodes
            st.x = nodes.x.copy()
            st.v = nodes.v.copy() if v0 is None else np.broadcast_to(v0, nodes.x.shape).copy()
            st.a = np.zeros_like(st.x)
            if self.coupling == "strong":
                I = build_interpolation(self.fluid.space, st.x, t)
                st.v = I.apply(st.Y[:, VEL])
        return st

    def _c_pen(self, dt):
        s = self.solid
        return penalty_coefficient(s.material.E, s.damage, s.nodes.spacing, dt, self.penalty)

    # -- callbacks
    def increments(self, lv: Levels):
        fl, so = self.fluid, self.solid
        am = lv.alpha_m
        if so is None:
            R, M = fl.terms(lv.Y, lv.Yt, lv.dt, self.diag.stats)
            return solve_blocks(am * M, R, fl.slip), None
        if fl is None:
            f, sig, eps = so.evaluate(lv.x, lv.v, lv.dt)
            self._trial = (sig, eps)
            m = so.mass[:, None]
            return None, -(m * lv.a - f) / (am * m)
        I = build_interpolation(fl.space, lv.x, lv.t)
        R, M = fl.terms(lv.Y, lv.Yt, lv.dt, self.diag.stats)
        if self.coupling == "strong":
            v = I.apply(lv.Y[:, VEL])
            a = I.apply(lv.Yt[:, VEL])
            f, sig, eps = so.evaluate(lv.x, v, lv.dt)
            self._trial = (sig, eps)
            r_s = so.mass[:, None] * a - f
            vol = so.nodes.volume
            Rc, removed = strong_couple_residual(fl.space, I, lv.x, vol, lv.Y, lv.Yt, R, r_s,
                                                 fl.mat, lv.dt, fl.floors, fl.supg, fl.dc)
            Mc = strong_couple_mass(M, removed, I, so.mass)
            return solve_blocks(am * Mc, Rc, fl.slip), None
        # weak coupling: velocity penalty with its lumped damping kept on the left-hand side
        c = self._c_pen(lv.dt)
        vol = so.nodes.volume
        pen = weak_couple_forces(I, lv.Y, lv.v, vol, c)
        self.diag.penalty_force = pen.total
        self.diag.penalty_power = pen.power
        R = R + pen.background
        damp = I.distribute((c * vol)[:, None])[:, 0]
        lhs = am * M
        lhs[:, 1, 1] += lv.damping_factor * damp
        lhs[:, 2, 2] += lv.damping_factor * damp
        f, sig, eps = so.evaluate(lv.x, lv.v, lv.dt)
        self._trial = (sig, eps)
        m = so.mass
        r_s = m[:, None] * lv.a - f - pen.solid
        ds = -r_s / (am * m + lv.damping_factor * c * vol)[:, None]
        return solve_blocks(lhs, R, fl.slip), ds

    def constrain(self, new: CoupledState, old: CoupledState, cfg: IntegratorConfig) -> None:
        if self.coupling != "strong":
            return
        I = build_interpolation(self.fluid.space, new.x, new.t)
        new.v = I.apply(new.Y[:, VEL])
        new.a = I.apply(new.Yt[:, VEL])
        new.x = newmark_positions(old.x, old.v, old.a, new.a, cfg.dt, cfg.beta)

    def finish_step(self, new: CoupledState, cfg: IntegratorConfig) -> None:
        so = self.solid
        if so is None:
            return
        so.commit(*self._trial)
        so.nodes.x = new.x.copy()
        so.nodes.v = new.v.copy()

    # -- diagnostics
    def momentum(self, state: CoupledState) -> np.ndarray:
        """Total linear momentum: fluid (per unit depth) plus solid."""
        p = np.zeros(2)
        if self.fluid is not None:
            quad = self.fluid.quad
            Yq = np.einsum("eqa,eak->eqk", quad.N, state.Y[quad.conn])
            rho = density(self.fluid.mat, Yq[..., 0], Yq[..., 3])
            p += np.einsum("eq,eq,eqk->k", quad.weights, rho, Yq[..., 1:3])
        if self.solid is not None:
            p += (self.solid.mass[:, None] * state.v).sum(axis=0)
        return p
