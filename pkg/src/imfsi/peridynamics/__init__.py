"""Peridynamic correspondence solid."""
from .constitutive import Brittle, Ductile, SolidMaterial, stress_update
from .family import (BondGradient, ConfigurationError, Family, build_families,
                     rk_gradient_weights)
from .nodes import PDNodeSet, annulus_nodes, rectangle_nodes
from .solid import (BondState, PDSolid, assemble_pd_internal_force, bond_velocity_gradient,
                    force_state, nodal_damage, update_damage_brittle, update_damage_ductile)

__all__ = [
    "Brittle", "Ductile", "SolidMaterial", "stress_update", "BondGradient", "ConfigurationError",
    "Family", "build_families", "rk_gradient_weights", "PDNodeSet", "annulus_nodes",
    "rectangle_nodes", "BondState", "PDSolid", "assemble_pd_internal_force",
    "bond_velocity_gradient", "force_state", "nodal_damage", "update_damage_brittle",
    "update_damage_ductile",
]
