"""Blast scenarios, diagnostics and the time-stepping driver."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .coupling import PenaltyConfig
from .flow import FluidBC, FluidMaterial
from .integrator import CoupledState, IntegratorConfig, step
from .peridynamics import (Brittle, Ductile, PDNodeSet, PDSolid, SolidMaterial, annulus_nodes,
                           rectangle_nodes)
from .peridynamics.family import Family
from .simulation import CoupledProblem, FluidSetup
from .spline import build_uniform_space, interpolate, project

LEVELS = ("coarse", "medium", "fine")
KINDS = ("chamber_detonation", "ductile_square", "brittle_cylinder", "custom")
BETAS = (1 / 3, 1.0, 3.0, 9.0)
FULL_DAMAGE = 0.99
# floors on p and T relative to the ambient state
FLOOR_FRACTION = 1e-6


@dataclass
class Detonation:
    shape: str = "circle"
    center: list = field(default_factory=lambda: [0.0, 0.0])
    radius: float = 0.05
    p: float = 6.75e6
    T: float = 1465.0


@dataclass
class SolidSpec:
    """``rectangle``: size and counts; ``hollow_square``: size, hole, counts;
    ``annulus``: radii and spacing."""

    shape: str = "rectangle"
    center: list = field(default_factory=lambda: [0.0, 0.0])
    size: list = field(default_factory=lambda: [0.2, 0.1])
    counts: list = field(default_factory=lambda: [30, 15])
    hole: list | None = None
    radii: list | None = None
    spacing: float | None = None
    thickness: float = 3.5e-3


@dataclass
class MaterialSpec:
    E: float = 200e9
    nu: float = 0.29
    rho0: float = 7870.0
    sigma_Y: float | None = 0.4e9
    H_hard: float = 0.1e9
    failure: str | None = None
    eps_th: float = 0.18
    eps_cr: float = 0.2
    sigma_cr: float = 3e9

    def build(self) -> SolidMaterial:
        fail = None
        if self.failure == "ductile":
            fail = Ductile(self.eps_th, self.eps_cr)
        elif self.failure == "brittle":
            fail = Brittle(self.sigma_cr)
        elif self.failure is not None:
            raise ValueError(f"unknown failure model {self.failure!r}")
        sy = np.inf if self.sigma_Y is None else self.sigma_Y
        return SolidMaterial(self.E, self.nu, sy, self.H_hard, self.rho0, fail)


@dataclass
class FluidSpec:
    gamma: float = 1.4
    mu: float = 1.81e-5
    prandtl: float = 0.72
    R_gas: float = 1.0e5 / 290.0

    def build(self) -> FluidMaterial:
        return FluidMaterial(self.gamma, self.mu, self.prandtl, self.R_gas)


@dataclass
class ScenarioConfig:
    kind: str = "custom"
    level: str = "coarse"
    domain: list = field(default_factory=lambda: [-0.2, 0.2, -0.2, 0.2])
    fluid_elements: list = field(default_factory=lambda: [20, 20])
    solid: SolidSpec = field(default_factory=SolidSpec)
    material: MaterialSpec = field(default_factory=MaterialSpec)
    fluid: FluidSpec = field(default_factory=FluidSpec)
    coupling: str = "strong"
    beta: float = 1.0
    damage_penalty: bool = False
    dt: float = 1e-6
    t_end: float = 1.5e-3
    rho_inf: float = 0.5
    n_passes: int = 2
    detonation: Detonation = field(default_factory=Detonation)
    ambient_p: float = 1e5
    ambient_T: float = 290.0
    probes: dict = field(default_factory=dict)
    log_every: int = 10
    snapshots: list = field(default_factory=list)
    vtk_lattice: int = 100

    def validate(self) -> "ScenarioConfig":
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.coupling not in ("strong", "weak"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate domain")
        for name in ("dt", "t_end", "beta", "ambient_p", "ambient_T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name, pt in self.probes.items():
            if not (x0 <= pt[0] <= x1 and y0 <= pt[1] <= y1):
                raise ValueError(f"probe {name} outside the domain")
        nodes = build_nodes(self)
        X = nodes.X
        if not (np.all(X[:, 0] > x0) and np.all(X[:, 0] < x1)
                and np.all(X[:, 1] > y0) and np.all(X[:, 1] < y1)):
            raise ValueError("solid must lie strictly inside the background domain")
        self.material.build()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        nested = {"solid": SolidSpec, "material": MaterialSpec, "fluid": FluidSpec,
                  "detonation": Detonation}
        for k, typ in nested.items():
            if k in d and isinstance(d[k], dict):
                d[k] = typ(**d[k])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))


def load_config(path) -> ScenarioConfig:
    return ScenarioConfig.from_json(Path(path).read_text()).validate()


# ---------------------------------------------------------------- scenario builders

def _check_level(level: str) -> int:
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
    return LEVELS.index(level)


def _coupling_opts(coupling: str, ratio: float, dt_strong: float):
    if coupling not in ("strong", "weak"):
        raise ValueError(f"unknown coupling {coupling!r}")
    return dt_strong if coupling == "strong" else dt_strong / ratio


def build_chamber_detonation(level: str = "coarse", coupling: str = "strong", beta: float = 1.0,
                             damage_penalty: bool = False) -> ScenarioConfig:
    """Steel bar in a closed chamber loaded by a wall detonation."""
    k = _check_level(level)
    fluid_n = (20, 40, 80)[k]
    solid_n = ((30, 15), (60, 30), (120, 60))[k]
    dt = _coupling_opts(coupling, 8.0, (1e-6, 0.5e-6, 0.25e-6)[k])
    return ScenarioConfig(
        kind="chamber_detonation", level=level, domain=[-0.2, 0.2, -0.2, 0.2],
        fluid_elements=[fluid_n, fluid_n],
        solid=SolidSpec("rectangle", [0.0, 0.0], [0.2, 0.1], list(solid_n), thickness=3.5e-3),
        material=MaterialSpec(sigma_Y=0.4e9, H_hard=0.1e9, rho0=7870.0),
        coupling=coupling, beta=beta, damage_penalty=damage_penalty, dt=dt, t_end=1.5e-3,
        detonation=Detonation("semicircle", [-0.2, 0.0], 6.1e-3, 6.75e6, 1465.0),
        probes={"p_det": [-0.2, 0.0], "p_wall": [0.2, 0.0]},
        log_every=max(1, int(round(1e-6 / dt))),
        snapshots=[0.1e-3, 0.4e-3, 0.7e-3, 1.5e-3])


def build_ductile_square(level: str = "coarse", coupling: str = "strong", beta: float = 1.0,
                         damage_penalty: bool = False) -> ScenarioConfig:
    """Hollow square plate with an internal detonation and ductile failure."""
    k = _check_level(level)
    h = (2e-3, 1.5e-3, 1e-3)[k]
    n_s = int(round(0.16 / h))
    n_f = int(round(0.4 / (4 * h)))
    dt = _coupling_opts(coupling, 4.0, (0.4e-6, 0.3e-6, 0.2e-6)[k])
    return ScenarioConfig(
        kind="ductile_square", level=level, domain=[-0.2, 0.2, -0.2, 0.2],
        fluid_elements=[n_f, n_f],
        solid=SolidSpec("hollow_square", [0.0, 0.0], [0.16, 0.16], [n_s, n_s],
                        hole=[0.10, 0.10], thickness=3.5e-3),
        material=MaterialSpec(sigma_Y=0.4e9, H_hard=0.1e9, rho0=7870.0, failure="ductile",
                              eps_th=0.18, eps_cr=0.2),
        coupling=coupling, beta=beta, damage_penalty=damage_penalty, dt=dt, t_end=300e-6,
        detonation=Detonation("circle", [0.0, 0.0], 0.05, 6.75e6, 1465.0),
        probes={"p_det": [0.0, 0.0], "p_wall": [0.2, 0.0]},
        log_every=max(1, int(round(1e-6 / dt))),
        snapshots=[80e-6, 120e-6, 200e-6, 300e-6])


def build_brittle_cylinder(level: str = "coarse", coupling: str = "strong", beta: float = 1.0,
                           damage_penalty: bool = False) -> ScenarioConfig:
    """Elastic brittle ring around an internal detonation."""
    k = _check_level(level)
    h = (2e-3, 1.5e-3, 1e-3)[k]
    n_f = int(round(0.3 / (3 * h)))
    dt = _coupling_opts(coupling, 4.0, (0.4e-6, 0.3e-6, 0.2e-6)[k])
    return ScenarioConfig(
        kind="brittle_cylinder", level=level, domain=[-0.15, 0.15, -0.15, 0.15],
        fluid_elements=[n_f, n_f],
        solid=SolidSpec("annulus", [0.0, 0.0], radii=[0.07, 0.10], spacing=h, thickness=5e-3,
                        size=[0.2, 0.2], counts=[0, 0]),
        material=MaterialSpec(sigma_Y=None, H_hard=0.0, rho0=7870.0, failure="brittle",
                              sigma_cr=3e9),
        coupling=coupling, beta=beta, damage_penalty=damage_penalty, dt=dt, t_end=300e-6,
        detonation=Detonation("circle", [0.0, 0.0], 0.035, 6.75e6, 1465.0),
        probes={"p_det": [0.0, 0.0], "p_wall": [0.15, 0.0]},
        log_every=max(1, int(round(1e-6 / dt))),
        snapshots=[50e-6, 67e-6, 75e-6, 150e-6, 300e-6])


BUILDERS = {
    "chamber_detonation": build_chamber_detonation,
    "ductile_square": build_ductile_square,
    "brittle_cylinder": build_brittle_cylinder,
}


def build_scenario(name: str, level: str = "coarse", coupling: str = "strong",
                   beta: float = 1.0, damage_penalty: bool = False) -> ScenarioConfig:
    if name not in BUILDERS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(BUILDERS)}")
    return BUILDERS[name](level, coupling, beta, damage_penalty)


# ---------------------------------------------------------------- setup helpers

def build_nodes(cfg: ScenarioConfig) -> PDNodeSet:
    s = cfg.solid
    rho = cfg.material.rho0
    if s.shape == "rectangle":
        return rectangle_nodes(s.center, s.size, s.counts, s.thickness, rho)
    if s.shape == "hollow_square":
        return rectangle_nodes(s.center, s.size, s.counts, s.thickness, rho, hole=s.hole)
    if s.shape == "annulus":
        return annulus_nodes(s.center, s.radii[0], s.radii[1], s.spacing, s.thickness, rho)
    raise ValueError(f"unknown solid shape {s.shape!r}")


def initial_fluid(space, cfg: ScenarioConfig) -> np.ndarray:
    """Ambient state with the detonation patch, by lumped (positivity-preserving) projection."""
    det = cfg.detonation
    c = np.asarray(det.center)
    n_g = int(np.clip(np.ceil(10 * max(space.hx, space.hy) / det.radius), 3, 30))

    def f(x):
        inside = np.sum((x - c) ** 2, axis=1) <= det.radius**2
        out = np.empty((x.shape[0], 2))
        out[:, 0] = np.where(inside, det.p, cfg.ambient_p)
        out[:, 1] = np.where(inside, det.T, cfg.ambient_T)
        return out

    pT = project(space, f, n_gauss=n_g, lumped=True)
    Y = np.zeros((space.n_cp, 4))
    Y[:, 0] = pT[:, 0]
    Y[:, 3] = pT[:, 1]
    return Y


def setup(cfg: ScenarioConfig):
    """Build the problem and its initial state from a config."""
    space = build_uniform_space(cfg.domain, *cfg.fluid_elements)
    fluid = FluidSetup(space, cfg.fluid.build(), FluidBC(),
                       floors=(FLOOR_FRACTION * cfg.ambient_p, FLOOR_FRACTION * cfg.ambient_T))
    solid = PDSolid(build_nodes(cfg), cfg.material.build())
    pen = PenaltyConfig(cfg.beta, cfg.damage_penalty)
    problem = CoupledProblem(fluid, solid, cfg.coupling, pen)
    state = problem.initial_state(initial_fluid(space, cfg))
    return problem, state


# ---------------------------------------------------------------- diagnostics

def mass_loss(nodes: PDNodeSet, damage: np.ndarray) -> float:
    """Mass fraction of nodes with d >= 0.99."""
    m = nodes.mass
    return float(m[np.asarray(damage) >= FULL_DAMAGE].sum() / m.sum())


def fragment_labels(family: Family, n_nodes: int) -> np.ndarray:
    """Connected components of the intact-bond graph."""
    b = family.intact
    g = coo_matrix((np.ones(int(b.sum())), (family.owner[b], family.nbr[b])),
                   shape=(n_nodes, n_nodes))
    return connected_components(g, directed=False)[1]


def count_fragments(family: Family, n_nodes: int, min_nodes: int = 2) -> int:
    """Number of intact-bond components with at least ``min_nodes`` nodes."""
    sizes = np.bincount(fragment_labels(family, n_nodes))
    return int(np.sum(sizes >= min_nodes))


COLUMNS = ("t", "p_det", "p_wall", "com_x", "f_pen_x", "mass_loss")


@dataclass
class RunResult:
    config: ScenarioConfig
    rows: list
    state: CoupledState
    problem: CoupledProblem
    snapshots: list
    penalty_power: list
    first_full_damage: np.ndarray | None = None
    first_full_damage_t: float | None = None

    @property
    def series(self) -> dict:
        arr = np.asarray(self.rows, dtype=float).reshape(-1, len(COLUMNS))
        return {c: arr[:, i] for i, c in enumerate(COLUMNS)}


def probe_row(cfg: ScenarioConfig, problem: CoupledProblem, state: CoupledState, com0) -> list:
    space = problem.fluid.space
    pts = np.array([cfg.probes.get("p_det", cfg.detonation.center),
                    cfg.probes.get("p_wall", [cfg.domain[1], 0.0])], dtype=float)
    vals, _ = interpolate(space, state.Y, pts)
    so = problem.solid
    com = so.nodes.center_of_mass() - com0
    f_pen = problem.diag.penalty_force[0] if problem.coupling == "weak" else 0.0
    return [state.t, vals[0, 0], vals[1, 0], com[0], f_pen, mass_loss(so.nodes, so.damage)]


def run(cfg: ScenarioConfig, out_dir=None, t_end: float | None = None, progress=None,
        write_vtk: bool = True) -> RunResult:
    """Time-step a scenario, collecting probes and writing CSV/VTK output."""
    from . import io

    cfg.validate()
    problem, state = setup(cfg)
    icfg = IntegratorConfig(cfg.dt, cfg.rho_inf, cfg.n_passes)
    t_end = cfg.t_end if t_end is None else t_end
    n_steps = int(np.ceil(t_end / cfg.dt - 1e-9))
    so = problem.solid
    com0 = so.nodes.center_of_mass(current=False)
    rows = [probe_row(cfg, problem, state, com0)]
    powers = []
    snaps = sorted(t for t in cfg.snapshots if t <= t_end + 0.5 * cfg.dt)
    done = []
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json())
    first_nodes, first_t = None, None
    try:
        for k in range(n_steps):
            state = step(state, icfg, problem)
            if problem.coupling == "weak":
                powers.append(problem.diag.penalty_power)
                if problem.diag.penalty_power < 0:
                    raise AssertionError("negative penalty power")
            if first_nodes is None:
                full = np.flatnonzero(so.damage >= FULL_DAMAGE)
                if full.size:
                    first_nodes, first_t = full, state.t
            if state.step % cfg.log_every == 0 or k == n_steps - 1:
                rows.append(probe_row(cfg, problem, state, com0))
                if progress is not None:
                    progress(state, rows[-1])
            while snaps and state.t >= snaps[0] - 0.5 * cfg.dt:
                t_s = snaps.pop(0)
                done.append((t_s, state.t))
                if out is not None and write_vtk:
                    io.write_snapshot(out, len(done) - 1, problem, state, cfg.vtk_lattice)
    except Exception:
        # flush the last state that completed a full step
        if out is not None and write_vtk:
            io.write_snapshot(out, len(done), problem, state, cfg.vtk_lattice, tag="last_good")
        raise
    finally:
        if out is not None:
            io.write_csv(out / "series.csv", COLUMNS, rows)
    return RunResult(cfg, rows, state, problem, done, powers, first_nodes, first_t)
