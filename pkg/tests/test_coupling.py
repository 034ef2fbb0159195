import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imfsi.coupling import (
    PenaltyConfig, SolidEscapedError, build_interpolation, penalty_coefficient,
    strong_couple_mass, strong_couple_residual, weak_couple_forces,
)
from imfsi.flow import AIR, assemble_fluid_residual, density, fluid_terms
from imfsi.peridynamics import PDSolid, SolidMaterial, rectangle_nodes
from imfsi.spline import build_quadrature, build_uniform_space

AMBIENT = np.array([1e5, 0.0, 0.0, 290.0])
DOMAIN = (-0.2, 0.2, -0.2, 0.2)


def _random_nodes(space, n, seed=0):
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = space.domain
    return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])


# -- interpolation

def test_rows_partition_unity():
    space = build_uniform_space(DOMAIN, 20, 20)
    I = build_interpolation(space, _random_nodes(space, 500))
    assert np.max(np.abs(I.N.sum(axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(np.asarray(I.matrix().sum(axis=1)).ravel() - 1.0)) < 1e-12


def test_constant_velocity_interpolates_exactly():
    space = build_uniform_space(DOMAIN, 10, 10)
    I = build_interpolation(space, _random_nodes(space, 100, 1))
    v = np.tile([3.0, -2.0], (space.n_cp, 1))
    np.testing.assert_allclose(I.apply(v), np.tile([3.0, -2.0], (100, 1)), rtol=1e-14)


def test_linear_field_at_greville_points():
    space = build_uniform_space(DOMAIN, 10, 10)
    g = space.greville_points()
    field = np.column_stack([2.0 * g[:, 0] - g[:, 1], 0.5 + g[:, 1]])
    I = build_interpolation(space, g)
    np.testing.assert_allclose(I.apply(field), field, atol=1e-14)


def test_escaped_node_reported():
    space = build_uniform_space(DOMAIN, 4, 4)
    x = np.array([[0.0, 0.0], [0.25, 0.0]])
    with pytest.raises(SolidEscapedError, match=r"node 1 .*t=1\.5"):
        build_interpolation(space, x, t=1.5e-4)


def test_distribute_single_force():
    space = build_uniform_space(DOMAIN, 8, 8)
    I = build_interpolation(space, np.array([[0.013, -0.071]]))
    f = np.array([[70.0, -3.0]])
    F = I.distribute(f)
    np.testing.assert_allclose(F.sum(axis=0), f[0], rtol=1e-14)


def test_distribute_is_adjoint_of_apply():
    space = build_uniform_space(DOMAIN, 8, 8)
    rng = np.random.default_rng(3)
    I = build_interpolation(space, _random_nodes(space, 40, 3))
    u = rng.normal(size=(space.n_cp, 2))
    w = rng.normal(size=(40, 2))
    assert np.sum(I.apply(u) * w) == pytest.approx(np.sum(u * I.distribute(w)), rel=1e-12)


# -- penalty coefficient

def test_penalty_example():
    c = penalty_coefficient(200e9, 0.0, 1e-3, 0.1e-6, PenaltyConfig(beta=1.0))
    assert c == pytest.approx(2e10, rel=1e-14)


def test_penalty_full_damage_is_zero():
    c = penalty_coefficient(200e9, np.array([1.0]), 1e-3, 1e-7,
                            PenaltyConfig(use_damage_scaling=True))
    assert c[0] == 0.0


def test_penalty_h_scaling():
    cfg = PenaltyConfig(beta=2.0)
    assert penalty_coefficient(1e9, 0.0, 2e-3, 1e-7, cfg) == pytest.approx(
        0.25 * penalty_coefficient(1e9, 0.0, 1e-3, 1e-7, cfg), rel=1e-14)


def test_penalty_damage_scaling_linear():
    d = np.array([0.0, 0.25, 0.5])
    c = penalty_coefficient(1e9, d, 1e-3, 1e-7, PenaltyConfig(use_damage_scaling=True))
    np.testing.assert_allclose(c, 1e9 * 1e-7 / 1e-6 * (1 - d), rtol=1e-14)


def test_penalty_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(beta=0.0)
    with pytest.raises(ValueError):
        penalty_coefficient(1e9, 0.0, 0.0, 1e-7, PenaltyConfig())


# -- weak coupling

def test_single_node_penalty_force():
    space = build_uniform_space(DOMAIN, 8, 8)
    I = build_interpolation(space, np.array([[0.01, 0.02]]))
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Y[:, 1] = 1.0
    out = weak_couple_forces(I, Y, np.zeros((1, 2)), np.array([3.5e-9]), np.array([2e10]))
    np.testing.assert_allclose(out.solid[0], [70.0, 0.0], rtol=1e-12)
    # force on the fluid is the negative residual contribution
    np.testing.assert_allclose(-out.background[:, 1:3].sum(axis=0), [-70.0, 0.0], rtol=1e-12)
    assert np.all(out.background[:, [0, 3]] == 0.0)


def test_matched_velocity_gives_zero_force():
    space = build_uniform_space(DOMAIN, 8, 8)
    x = _random_nodes(space, 30, 5)
    I = build_interpolation(space, x)
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Y[:, 1:3] = np.random.default_rng(5).normal(size=(space.n_cp, 2))
    out = weak_couple_forces(I, Y, I.apply(Y[:, 1:3]), np.full(30, 1e-8), np.full(30, 1e10))
    assert np.max(np.abs(out.solid)) < 1e-12 * 1e10 * 1e-8
    assert out.power < 1e-20


def test_fully_damaged_node_contributes_nothing():
    space = build_uniform_space(DOMAIN, 8, 8)
    I = build_interpolation(space, np.array([[0.0, 0.0], [0.05, 0.05]]))
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Y[:, 1] = 10.0
    c = penalty_coefficient(200e9, np.array([1.0, 0.0]), 1e-3, 1e-7,
                            PenaltyConfig(use_damage_scaling=True))
    out = weak_couple_forces(I, Y, np.zeros((2, 2)), np.full(2, 3.5e-9), c)
    assert np.all(out.solid[0] == 0.0) and np.any(out.solid[1] != 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_action_reaction_and_power(seed, beta):
    space = build_uniform_space(DOMAIN, 6, 6)
    rng = np.random.default_rng(seed)
    n = 25
    x = _random_nodes(space, n, seed)
    I = build_interpolation(space, x)
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Y[:, 1:3] = rng.normal(scale=50.0, size=(space.n_cp, 2))
    d = rng.uniform(0, 1, n)
    c = penalty_coefficient(200e9, d, 1e-3, 1e-7, PenaltyConfig(beta, True))
    out = weak_couple_forces(I, Y, rng.normal(scale=50.0, size=(n, 2)),
                             rng.uniform(1e-9, 5e-9, n), c)
    fluid_force = -out.background[:, 1:3].sum(axis=0)
    scale = np.abs(out.solid).sum()
    assert np.all(np.abs(fluid_force + out.solid.sum(axis=0)) <= 1e-10 * scale)
    assert out.power >= 0.0


def test_penalty_force_linear_in_beta():
    space = build_uniform_space(DOMAIN, 6, 6)
    rng = np.random.default_rng(8)
    I = build_interpolation(space, _random_nodes(space, 20, 8))
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Y[:, 1:3] = rng.normal(size=(space.n_cp, 2))
    vs = rng.normal(size=(20, 2))
    totals = [weak_couple_forces(I, Y, vs, np.full(20, 3.5e-9),
                                 penalty_coefficient(200e9, 0.0, 1e-3, 1e-7,
                                                     PenaltyConfig(b))).total
              for b in (1.0, 3.0)]
    np.testing.assert_allclose(totals[1], 3.0 * totals[0], rtol=1e-12)


# -- strong coupling

def _fake_solid(p0, rho, n=6):
    """Air-like solid: density of the gas and a prestress equal to its pressure.

    The patch sits inside a single background element so the background
    basis is one biquadratic over every family.
    """
    nodes = rectangle_nodes((0.15, 0.15), (0.012, 0.012), (n, n), 1e-2, rho)
    return PDSolid(nodes, SolidMaterial(rho0=rho), prestress=[-p0, -p0, 0.0])


def _combined_minus_fluid(space, solid, Y, Yt):
    x = solid.nodes.X
    R_f = assemble_fluid_residual(space, Y, Yt, AIR, dt=1e-6, supg=False, dc=False,
                                  apply_bcs=False)
    I = build_interpolation(space, x)
    f, _, _ = solid.evaluate(x, I.apply(Y[:, 1:3]), 1e-6)
    r_s = solid.mass[:, None] * I.apply(Yt[:, 1:3]) - f
    R, removed = strong_couple_residual(space, I, x, solid.nodes.volume, Y, Yt, R_f, r_s, AIR,
                                        dt=1e-6, supg=False, dc=False)
    return R - R_f, removed, I


def test_strong_coupling_cancels_inertia_of_fluid_matched_solid():
    space = build_uniform_space(DOMAIN, 4, 4)
    rho = float(density(AIR, 1e5, 290.0))
    solid = _fake_solid(1e5, rho)
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Yt = np.zeros_like(Y)
    d0, _, _ = _combined_minus_fluid(space, solid, Y, Yt)
    Yt[:, 1:3] = [3e3, -1e3]
    d1, removed, I = _combined_minus_fluid(space, solid, Y, Yt)
    inertia = np.abs(solid.mass).sum() * 3e3
    assert np.max(np.abs(d1 - d0)) <= 1e-8 * inertia
    quad = build_quadrature(space)
    _, M = fluid_terms(space, quad, Y, Yt, AIR, supg=False, dc=False)
    Mc = strong_couple_mass(M, removed, I, solid.mass)
    np.testing.assert_allclose(Mc, M, rtol=1e-10, atol=1e-10 * np.abs(M).max())


def test_strong_coupling_pressure_cancellation_converges():
    # the nonlocal divergence is exact for total-degree-2 fields while the
    # background basis is biquadratic, so the mismatch is a discretization error
    space = build_uniform_space(DOMAIN, 4, 4)
    rho = float(density(AIR, 1e5, 290.0))
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Yt = np.zeros_like(Y)
    errs = []
    for n in (6, 12, 24):
        d, _, _ = _combined_minus_fluid(space, _fake_solid(1e5, rho, n), Y, Yt)
        errs.append(np.abs(d).max())
    scale = 1e5 * 0.012**2 * 1e-2 / space.h  # pressure times patch volume over h
    assert errs[0] < 1e-3 * scale
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.5)


def test_strong_coupling_static_solid_at_ambient():
    space = build_uniform_space(DOMAIN, 8, 8)
    rho = float(density(AIR, 1e5, 290.0))
    solid = _fake_solid(1e5, rho)
    x = solid.nodes.X
    Y = np.tile(AMBIENT, (space.n_cp, 1))
    Yt = np.zeros_like(Y)
    R_f = assemble_fluid_residual(space, Y, Yt, AIR, dt=1e-6)
    I = build_interpolation(space, x)
    f, _, _ = solid.evaluate(x, I.apply(Y[:, 1:3]), 1e-6)
    R, _ = strong_couple_residual(space, I, x, solid.nodes.volume, Y, Yt, R_f, -f, AIR, dt=1e-6)
    # patch crosses knot lines here, so the pressure cancellation is only approximate;
    # the static, unloaded configuration must still produce no net force
    assert np.abs(R[:, 1:3].sum(axis=0)).max() <= 1e-8 * 1e5 * space.h
    assert np.max(np.abs(R[:, [0, 3]])) <= 1e-9 * 1e5 * space.h
