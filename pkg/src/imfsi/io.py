"""CSV time series and legacy ASCII VTK snapshots."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .spline import SplineSpace2D, interpolate


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, columns, rows) -> None:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> dict:
    text = Path(path).read_text().strip().splitlines()
    cols = text[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in text[1:]]).reshape(-1, len(cols))
    return {c: data[:, i] for i, c in enumerate(cols)}


def sample_lattice(space: SplineSpace2D, Y: np.ndarray, n: int):
    """Evaluate p, |v|, T on an n x n lattice spanning the domain."""
    x0, x1, y0, y1 = space.domain
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    X, Yg = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Yg.ravel()])
    vals, _ = interpolate(space, Y, pts)
    speed = np.hypot(vals[:, 1], vals[:, 2])
    return (xs, ys), {"p": vals[:, 0], "speed": speed, "T": vals[:, 3]}


def write_vtk_lattice(path, space: SplineSpace2D, Y: np.ndarray, n: int = 100) -> None:
    (xs, ys), fields = sample_lattice(space, Y, n)
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    out = ["# vtk DataFile Version 3.0", "background fields", "ASCII",
           "DATASET STRUCTURED_POINTS", f"DIMENSIONS {n} {n} 1",
           f"ORIGIN {_fmt(xs[0])} {_fmt(ys[0])} 0", f"SPACING {_fmt(dx)} {_fmt(dy)} 1",
           f"POINT_DATA {n * n}"]
    for name, arr in fields.items():
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [" ".join(_fmt(v) for v in arr[i:i + n]) for i in range(0, arr.size, n)]
    Path(path).write_text("\n".join(out) + "\n")


def write_vtk_points(path, x: np.ndarray, scalars: dict, vectors: dict | None = None) -> None:
    n = x.shape[0]
    out = ["# vtk DataFile Version 3.0", "foreground nodes", "ASCII", "DATASET POLYDATA",
           f"POINTS {n} double"]
    out += [f"{_fmt(p[0])} {_fmt(p[1])} 0" for p in x]
    out += [f"VERTICES {n} {2 * n}"] + [f"1 {i}" for i in range(n)]
    out.append(f"POINT_DATA {n}")
    for name, arr in (vectors or {}).items():
        out.append(f"VECTORS {name} double")
        out += [f"{_fmt(a[0])} {_fmt(a[1])} 0" for a in arr]
    for name, arr in scalars.items():
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [_fmt(a) for a in arr]
    Path(path).write_text("\n".join(out) + "\n")


def write_snapshot(out_dir, index, problem, state, n: int = 100, tag: str | None = None) -> None:
    out_dir = Path(out_dir)
    name = f"{index:03d}" if tag is None else tag
    write_vtk_lattice(out_dir / f"fluid_{name}.vtk", problem.fluid.space, state.Y, n)
    so = problem.solid
    if so is not None:
        write_vtk_points(out_dir / f"solid_{name}.vtk", state.x,
                         {"eqps": so.nodal_plastic_strain(), "damage": so.damage},
                         {"velocity": state.v})
