import json

import numpy as np
import pytest

from imfsi import cli, io
from imfsi.coupling import SolidEscapedError
from imfsi.integrator import InstabilityError
from imfsi.peridynamics import rectangle_nodes
from imfsi.peridynamics.family import build_families
from imfsi.scenarios import (
    BETAS, COLUMNS, Detonation, MaterialSpec, ScenarioConfig, SolidSpec, build_nodes,
    build_scenario, count_fragments, fragment_labels, load_config, mass_loss, run,
)
from imfsi.spline import build_uniform_space


def tiny_config(**kw):
    """Small weak-coupled plate next to a detonation; runs in a couple of seconds."""
    base = dict(
        kind="custom", domain=[-0.05, 0.05, -0.05, 0.05], fluid_elements=[6, 6],
        solid=SolidSpec("rectangle", [0.015, 0.0], [0.02, 0.02], [6, 6], thickness=3.5e-3),
        coupling="weak", dt=5e-8, t_end=1e-6,
        detonation=Detonation("circle", [-0.02, 0.0], 0.01, 6.75e6, 1465.0),
        probes={"p_det": [-0.02, 0.0], "p_wall": [0.05, 0.0]},
        log_every=2, snapshots=[0.5e-6, 1e-6], vtk_lattice=8,
    )
    base.update(kw)
    return ScenarioConfig(**base)


# -- builders

def test_chamber_levels():
    fine = build_scenario("chamber_detonation", "fine")
    assert fine.fluid_elements == [80, 80]
    assert fine.solid.counts == [120, 60]
    coarse = build_scenario("chamber_detonation", "coarse")
    assert len(build_nodes(coarse)) == 450
    assert set(BETAS) == {1 / 3, 1.0, 3.0, 9.0}


def test_chamber_geometry_and_materials():
    cfg = build_scenario("chamber_detonation", "coarse")
    assert cfg.domain == [-0.2, 0.2, -0.2, 0.2]
    assert cfg.solid.size == [0.2, 0.1]
    assert cfg.solid.thickness == 3.5e-3
    m = cfg.material
    assert (m.E, m.nu, m.sigma_Y, m.H_hard, m.rho0) == (200e9, 0.29, 0.4e9, 0.1e9, 7870.0)
    assert (cfg.ambient_p, cfg.ambient_T) == (1e5, 290.0)
    d = cfg.detonation
    assert (d.shape, d.radius, d.p, d.T) == ("semicircle", 6.1e-3, 6.75e6, 1465.0)


def test_chamber_weak_dt_eight_times_smaller():
    for level in ("coarse", "medium", "fine"):
        s = build_scenario("chamber_detonation", level, "strong")
        w = build_scenario("chamber_detonation", level, "weak")
        assert w.dt == pytest.approx(s.dt / 8, rel=1e-14)
    assert build_scenario("chamber_detonation", "coarse").dt == pytest.approx(1e-6)


def test_ductile_levels():
    fine = build_scenario("ductile_square", "fine")
    assert (fine.domain[1] - fine.domain[0]) / fine.fluid_elements[0] == pytest.approx(4e-3)
    assert fine.solid.size[0] / fine.solid.counts[0] == pytest.approx(1e-3)
    assert build_scenario("ductile_square", "medium").dt == pytest.approx(0.3e-6)
    assert build_scenario("ductile_square", "fine", "weak").dt == pytest.approx(0.05e-6)
    m = fine.material
    assert (m.failure, m.eps_th, m.eps_cr) == ("ductile", 0.18, 0.2)
    assert fine.solid.hole == [0.10, 0.10] and fine.solid.size == [0.16, 0.16]


def test_brittle_levels():
    fine = build_scenario("brittle_cylinder", "fine")
    assert (fine.domain[1] - fine.domain[0]) / fine.fluid_elements[0] == pytest.approx(3e-3)
    assert fine.material.sigma_cr == 3e9
    assert fine.material.failure == "brittle"
    nodes = build_nodes(build_scenario("brittle_cylinder", "coarse"))
    exact = np.pi * (0.10**2 - 0.07**2) * 0.005
    assert abs(nodes.volume.sum() / exact - 1.0) < 5e-3


def test_unknown_scenario_and_level():
    with pytest.raises(ValueError, match="unknown scenario"):
        build_scenario("nope")
    with pytest.raises(ValueError, match="unknown level"):
        build_scenario("chamber_detonation", "huge")


def test_all_builders_validate():
    for name in ("chamber_detonation", "ductile_square", "brittle_cylinder"):
        for coupling in ("strong", "weak"):
            build_scenario(name, "coarse", coupling).validate()


# -- config

def test_config_round_trip():
    cfg = build_scenario("ductile_square", "medium", "weak", 3.0, True)
    back = ScenarioConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.to_json() == cfg.to_json()


def test_config_rejects_unknown_keys(tmp_path):
    d = tiny_config().to_dict()
    d["velocity_of_light"] = 3e8
    with pytest.raises(ValueError, match="unknown config keys"):
        ScenarioConfig.from_dict(d)


def test_config_rejects_solid_outside_domain():
    cfg = tiny_config(solid=SolidSpec("rectangle", [0.045, 0.0], [0.02, 0.02], [4, 4]))
    with pytest.raises(ValueError, match="strictly inside"):
        cfg.validate()


def test_config_rejects_probe_outside_domain():
    with pytest.raises(ValueError, match="probe"):
        tiny_config(probes={"p_det": [0.2, 0.0]}).validate()


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        tiny_config(dt=0.0).validate()
    with pytest.raises(ValueError):
        tiny_config(coupling="glue").validate()
    with pytest.raises(ValueError):
        tiny_config(material=MaterialSpec(failure="melting")).validate()


# -- diagnostics

def test_mass_loss_examples():
    nodes = rectangle_nodes((0.0, 0.0), (0.01, 0.01), (4, 4), 1e-3, 7870.0)
    n = len(nodes)
    assert mass_loss(nodes, np.zeros(n)) == 0.0
    assert mass_loss(nodes, np.ones(n)) == 1.0
    d = np.zeros(n)
    d[: n // 2] = 0.995
    assert mass_loss(nodes, d) == 0.5
    d[: n // 2] = 0.98  # below the full-damage threshold
    assert mass_loss(nodes, d) == 0.0


def test_fragments_after_cutting_bonds():
    nodes = rectangle_nodes((0.0, 0.0), (0.02, 0.01), (10, 5), 1e-3, 7870.0)
    fam = build_families(nodes, 3.0 * nodes.spacing.max())
    assert count_fragments(fam, len(nodes)) == 1
    X = nodes.X
    crossing = (X[fam.owner, 0] < 0) != (X[fam.nbr, 0] < 0)
    fam.intact[crossing] = False
    labels = fragment_labels(fam, len(nodes))
    assert count_fragments(fam, len(nodes)) == 2
    assert len(np.unique(labels[X[:, 0] < 0])) == 1
    # an isolated node is not a fragment by default
    fam.intact[(fam.owner == 0) | (fam.nbr == 0)] = False
    assert count_fragments(fam, len(nodes)) == 2
    assert count_fragments(fam, len(nodes), min_nodes=1) == 3


# -- output

def test_csv_round_trip(tmp_path):
    rows = [[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], [1e-7, 1 / 3, np.pi, -1e-300, 0.0, 1.0]]
    io.write_csv(tmp_path / "a.csv", COLUMNS, rows)
    back = io.read_csv(tmp_path / "a.csv")
    assert list(back) == list(COLUMNS)
    for i, c in enumerate(COLUMNS):
        assert np.array_equal(back[c], np.array([r[i] for r in rows]))


def test_vtk_lattice_format(tmp_path):
    space = build_uniform_space((0.0, 1.0, 0.0, 2.0), 3, 4)
    Y = np.tile([1e5, 3.0, 4.0, 290.0], (space.n_cp, 1))
    io.write_vtk_lattice(tmp_path / "f.vtk", space, Y, n=5)
    lines = (tmp_path / "f.vtk").read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert "DIMENSIONS 5 5 1" in lines
    assert "SPACING 0.25 0.5 1" in lines
    i = lines.index("SCALARS speed double 1")
    vals = np.array(" ".join(lines[i + 2:i + 7]).split(), dtype=float)
    np.testing.assert_allclose(vals, 5.0, rtol=1e-12)


def test_vtk_points_format(tmp_path):
    x = np.array([[0.0, 0.0], [1.0, 2.0]])
    io.write_vtk_points(tmp_path / "s.vtk", x, {"damage": np.array([0.0, 1.0])},
                        {"velocity": np.array([[1.0, 0.0], [0.0, 1.0]])})
    lines = (tmp_path / "s.vtk").read_text().splitlines()
    assert "DATASET POLYDATA" in lines
    assert "POINTS 2 double" in lines
    assert "1.0 2.0 0" in lines
    assert "VERTICES 2 4" in lines
    assert "VECTORS velocity double" in lines
    assert lines[-2:] == ["0.0", "1.0"]


def test_run_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    ra = run(tiny_config(), a)
    run(tiny_config(), b)
    assert (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()
    s = io.read_csv(a / "series.csv")
    assert list(s) == list(COLUMNS)
    assert s["t"][-1] == pytest.approx(1e-6)
    assert np.all(np.diff(s["t"]) > 0)
    assert s["p_det"][0] > 1e6  # detonation probe starts inside the patch
    assert ra.penalty_power and min(ra.penalty_power) >= 0.0
    assert json.loads((a / "config.json").read_text()) == tiny_config().to_dict()


def test_snapshot_schedule(tmp_path):
    cfg = tiny_config()
    res = run(cfg, tmp_path)
    assert [t for t, _ in res.snapshots] == cfg.snapshots
    for t_req, t_hit in res.snapshots:
        assert abs(t_hit - t_req) <= cfg.dt
    for k in range(2):
        assert (tmp_path / f"fluid_{k:03d}.vtk").exists()
        assert (tmp_path / f"solid_{k:03d}.vtk").exists()
    assert "SCALARS eqps double 1" in (tmp_path / "solid_000.vtk").read_text()


def test_instability_flushes_last_good_snapshot(tmp_path):
    # far beyond the stable step: the run aborts by blow-up or by nodes escaping
    cfg = tiny_config(dt=2e-5, t_end=4e-3, snapshots=[])
    with pytest.raises((InstabilityError, SolidEscapedError)):
        run(cfg, tmp_path)
    assert (tmp_path / "fluid_last_good.vtk").exists()
    assert (tmp_path / "series.csv").exists()


# -- command line

def test_cli_flags_round_trip(capsys):
    assert cli.main(["run", "--scenario", "chamber_detonation", "--coupling", "weak",
                     "--beta", "1", "--dry-run"]) == 0
    cfg = ScenarioConfig.from_json(capsys.readouterr().out)
    assert cfg == build_scenario("chamber_detonation", "coarse", "weak", 1.0)
    assert cfg.coupling == "weak" and cfg.beta == 1.0


def test_cli_unknown_scenario_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--scenario", "volcano"])
    assert exc.value.code != 0
    assert "invalid choice" in capsys.readouterr().err


def test_cli_requires_scenario_or_config(capsys):
    assert cli.main(["run", "--dry-run"]) != 0


def test_cli_config_with_flag_override(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(tiny_config().to_json())
    assert cli.main(["run", "--config", str(p), "--beta", "3", "--dry-run"]) == 0
    cfg = ScenarioConfig.from_json(capsys.readouterr().out)
    assert cfg.beta == 3.0 and cfg.coupling == "weak"


def test_cli_validate(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(tiny_config().to_json())
    assert cli.main(["validate", str(good)]) == 0
    assert load_config(good) == tiny_config()
    bad = tmp_path / "bad.json"
    d = tiny_config().to_dict()
    d["solid"]["center"] = [1.0, 1.0]
    bad.write_text(json.dumps(d))
    assert cli.main(["validate", str(bad)]) == 2
    assert "invalid config" in capsys.readouterr().err


def test_cli_run_writes_outputs(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(tiny_config(snapshots=[]).to_json())
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(p), "--out", str(out), "--quiet"]) == 0
    assert "finished" in capsys.readouterr().out
    assert (out / "series.csv").exists()


def test_cli_oracle_sod(capsys):
    assert cli.main(["oracle", "sod", "--n", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "x,rho,u,p"
    first = [float(v) for v in lines[1].split(",")]
    last = [float(v) for v in lines[-1].split(",")]
    assert first[1:] == [1.0, 0.0, 1.0]
    assert last[1:] == [0.125, 0.0, 0.1]
