"""Immersed fluid-structure interaction: spline background flow coupled to a
peridynamic foreground solid."""
from .coupling import PenaltyConfig, build_interpolation, penalty_coefficient
from .flow import AIR, FluidBC, FluidMaterial, assemble_fluid_residual
from .integrator import CoupledState, IntegratorConfig, stable_dt_estimate, step
from .scenarios import ScenarioConfig, build_scenario, run
from .spline import SplineSpace2D, build_uniform_space

__version__ = "0.1.0"

__all__ = [
    "PenaltyConfig", "build_interpolation", "penalty_coefficient", "AIR", "FluidBC",
    "FluidMaterial", "assemble_fluid_residual", "CoupledState", "IntegratorConfig",
    "stable_dt_estimate", "step", "ScenarioConfig", "build_scenario", "run", "SplineSpace2D",
    "build_uniform_space",
]
