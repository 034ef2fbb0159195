"""Foreground PD node sets and simple geometric generators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PDNodeSet:
    """Material points with reference/current positions, velocities and volumes.

    Volumes are in m^3 (in-plane cell area times the plate thickness).
    """

    X: np.ndarray
    volume: np.ndarray
    spacing: np.ndarray
    rho0: np.ndarray
    thickness: float = 1.0
    x: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 2)
        n = self.X.shape[0]
        self.volume = np.broadcast_to(np.asarray(self.volume, dtype=float), (n,)).copy()
        self.spacing = np.broadcast_to(np.asarray(self.spacing, dtype=float), (n,)).copy()
        self.rho0 = np.broadcast_to(np.asarray(self.rho0, dtype=float), (n,)).copy()
        if np.any(self.volume <= 0):
            raise ValueError("node volumes must be positive")
        self.x = self.X.copy() if self.x is None else np.asarray(self.x, dtype=float).copy()
        self.v = np.zeros_like(self.X) if self.v is None else np.asarray(self.v, dtype=float).copy()

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def mass(self) -> np.ndarray:
        return self.rho0 * self.volume

    def center_of_mass(self, current: bool = True) -> np.ndarray:
        pos = self.x if current else self.X
        m = self.mass
        return (m[:, None] * pos).sum(axis=0) / m.sum()


def rectangle_nodes(center, size, counts, thickness: float, rho0: float,
                    hole=None) -> PDNodeSet:
    """One node per cell centroid of a uniform ``counts[0] x counts[1]`` grid.

    ``hole`` optionally removes cells whose centroid falls inside a
    centered rectangle of the given (width, height).
    """
    cx, cy = center
    Lx, Ly = size
    nx, ny = counts
    hx, hy = Lx / nx, Ly / ny
    xs = cx - Lx / 2 + (np.arange(nx) + 0.5) * hx
    ys = cy - Ly / 2 + (np.arange(ny) + 0.5) * hy
    X, Yg = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Yg.ravel()])
    if hole is not None:
        hw, hh = hole[0] / 2, hole[1] / 2
        inside = (np.abs(pts[:, 0] - cx) < hw) & (np.abs(pts[:, 1] - cy) < hh)
        pts = pts[~inside]
    return PDNodeSet(pts, hx * hy * thickness, np.sqrt(hx * hy), rho0, thickness)


def annulus_nodes(center, r_in: float, r_out: float, h: float, thickness: float,
                  rho0: float) -> PDNodeSet:
    """Semi-uniform polar layout: rings of radial spacing ~h, uniform in angle."""
    nr = max(1, int(round((r_out - r_in) / h)))
    dr = (r_out - r_in) / nr
    pts, vols, sp = [], [], []
    for k in range(nr):
        r = r_in + (k + 0.5) * dr
        nt = max(3, int(round(2 * np.pi * r / h)))
        dth = 2 * np.pi / nt
        th = (np.arange(nt) + 0.5) * dth
        pts.append(np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)]))
        vols.append(np.full(nt, r * dr * dth * thickness))
        sp.append(np.full(nt, dr))
    return PDNodeSet(np.vstack(pts), np.concatenate(vols), np.concatenate(sp), rho0, thickness)
