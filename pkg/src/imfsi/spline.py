"""Tensor-product quadratic B-spline space on a rectangle.

The background discretization is an open, uniform, C1 quadratic B-spline
space. Knots are stored in physical units so parametric and physical
coordinates coincide (the geometric map is the identity up to the domain
offset).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import spsolve

DEGREE = 2


class OutOfDomainError(ValueError):
    """Raised when a point lies outside the background rectangle."""


@dataclass(frozen=True)
class KnotVector:
    degree: int
    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if np.any(np.diff(k) < 0):
            raise ValueError("knots must be nondecreasing")
        p = self.degree
        if not (np.all(k[: p + 1] == k[0]) and np.all(k[-p - 1:] == k[-1])):
            raise ValueError("knot vector must be open (clamped)")
        interior = k[p + 1: -p - 1]
        if interior.size and np.any(np.diff(interior) == 0):
            raise ValueError("interior knots must be simple")
        object.__setattr__(self, "knots", k)

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def n_elements(self) -> int:
        return self.n_basis - self.degree

    def greville(self) -> np.ndarray:
        p = self.degree
        return np.array([self.knots[i + 1: i + p + 1].mean() for i in range(self.n_basis)])

    @classmethod
    def open_uniform(cls, a: float, b: float, nel: int, degree: int = DEGREE) -> "KnotVector":
        inner = np.linspace(a, b, nel + 1)
        knots = np.concatenate([[a] * degree, inner, [b] * degree])
        return cls(degree, knots)


def basis_1d(kv: KnotVector, span: np.ndarray, u: np.ndarray):
    """Nonzero basis values and first derivatives at ``u`` (Cox-de Boor).

    ``span`` is the knot-array index ``s`` with ``t[s] <= u <= t[s+1]``.
    Returns arrays of shape ``(len(u), p+1)`` for the functions
    ``s-p, ..., s``.
    """
    t = kv.knots
    p = kv.degree
    u = np.asarray(u, dtype=float)
    span = np.asarray(span)
    n = u.size
    left = np.empty((n, p + 1))
    right = np.empty((n, p + 1))
    # ndu[j] holds degree-j values; keep all degrees for the derivative
    ndu = [np.ones((n, 1))]
    for j in range(1, p + 1):
        left[:, j] = u - t[span + 1 - j]
        right[:, j] = t[span + j] - u
        prev = ndu[-1]
        cur = np.zeros((n, j + 1))
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = prev[:, r] / denom
            cur[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        cur[:, j] = saved
        ndu.append(cur)
    vals = ndu[p]
    # derivative from degree p-1 values
    low = ndu[p - 1]
    ders = np.zeros((n, p + 1))
    for r in range(p + 1):
        acc = np.zeros(n)
        if r >= 1:
            i = span - p + r
            acc += low[:, r - 1] / (t[i + p] - t[i])
        if r <= p - 1:
            i = span - p + r + 1
            acc -= low[:, r] / (t[i + p] - t[i])
        ders[:, r] = p * acc
    return vals, ders


@dataclass(frozen=True)
class SplineSpace2D:
    kv_x: KnotVector
    kv_y: KnotVector
    domain: tuple  # (x0, x1, y0, y1)

    @property
    def nx(self) -> int:
        return self.kv_x.n_basis

    @property
    def ny(self) -> int:
        return self.kv_y.n_basis

    @property
    def n_cp(self) -> int:
        return self.nx * self.ny

    @property
    def nel_x(self) -> int:
        return self.kv_x.n_elements

    @property
    def nel_y(self) -> int:
        return self.kv_y.n_elements

    @property
    def n_elements(self) -> int:
        return self.nel_x * self.nel_y

    @property
    def hx(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.nel_x

    @property
    def hy(self) -> float:
        return (self.domain[3] - self.domain[2]) / self.nel_y

    @property
    def h(self) -> float:
        """Representative element size used by stabilization terms."""
        return float(np.sqrt(self.hx * self.hy))

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    def cp_index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def greville_points(self) -> np.ndarray:
        gx = self.kv_x.greville()
        gy = self.kv_y.greville()
        X, Y = np.meshgrid(gx, gy)  # row j, column i -> index j*nx+i
        return np.column_stack([X.ravel(), Y.ravel()])

    def element_bounds(self, e: int):
        ex, ey = e % self.nel_x, e // self.nel_x
        x0, _, y0, _ = self.domain
        return (x0 + ex * self.hx, x0 + (ex + 1) * self.hx,
                y0 + ey * self.hy, y0 + (ey + 1) * self.hy)

    def boundary_cps(self, side: str) -> np.ndarray:
        i = np.arange(self.nx)
        j = np.arange(self.ny)
        if side == "left":
            return self.cp_index(0, j)
        if side == "right":
            return self.cp_index(self.nx - 1, j)
        if side == "bottom":
            return self.cp_index(i, 0)
        if side == "top":
            return self.cp_index(i, self.ny - 1)
        raise ValueError(f"unknown side {side!r}")

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        x0, x1, y0, y1 = self.domain
        return ((x[:, 0] >= x0 - tol) & (x[:, 0] <= x1 + tol)
                & (x[:, 1] >= y0 - tol) & (x[:, 1] <= y1 + tol))

    def locate(self, x: np.ndarray):
        """Element indices (ex, ey) for points; knot ties go to the lower element."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not np.all(self.contains(x)):
            bad = np.flatnonzero(~self.contains(x))
            raise OutOfDomainError(
                f"{bad.size} point(s) outside background domain, first index {bad[0]} "
                f"at {x[bad[0]].tolist()}")
        x0, _, y0, _ = self.domain
        ex = np.clip(np.ceil((x[:, 0] - x0) / self.hx).astype(int) - 1, 0, self.nel_x - 1)
        ey = np.clip(np.ceil((x[:, 1] - y0) / self.hy).astype(int) - 1, 0, self.nel_y - 1)
        return ex, ey


def build_uniform_space(domain, nel_x: int, nel_y: int) -> SplineSpace2D:
    """Open uniform quadratic B-spline space with ``nel_x * nel_y`` elements."""
    if int(nel_x) != nel_x or int(nel_y) != nel_y or nel_x < 2 or nel_y < 2:
        raise ValueError(f"need at least 2x2 elements, got {nel_x}x{nel_y}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain}")
    return SplineSpace2D(KnotVector.open_uniform(x0, x1, int(nel_x)),
                         KnotVector.open_uniform(y0, y1, int(nel_y)),
                         (x0, x1, y0, y1))


def _eval_local(space: SplineSpace2D, x: np.ndarray, ex: np.ndarray, ey: np.ndarray):
    p = DEGREE
    vx, dx = basis_1d(space.kv_x, ex + p, x[:, 0])
    vy, dy = basis_1d(space.kv_y, ey + p, x[:, 1])
    # local ordering a = b*3 + a_x  (b along y)
    vals = (vy[:, :, None] * vx[:, None, :]).reshape(-1, 9)
    gx = (vy[:, :, None] * dx[:, None, :]).reshape(-1, 9)
    gy = (dy[:, :, None] * vx[:, None, :]).reshape(-1, 9)
    ix = ex[:, None] + np.arange(3)[None, :]
    iy = ey[:, None] + np.arange(3)[None, :]
    idx = (iy[:, :, None] * space.nx + ix[:, None, :]).reshape(-1, 9)
    return idx, vals, np.stack([gx, gy], axis=-1)


def eval_basis(space: SplineSpace2D, x):
    """Active basis indices, values and gradients at points ``x``.

    Returns ``(idx, N, dN)`` with shapes ``(n, 9)``, ``(n, 9)`` and
    ``(n, 9, 2)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ex, ey = space.locate(x)
    return _eval_local(space, x, ex, ey)


def interpolate(space: SplineSpace2D, field: np.ndarray, x):
    """Values and gradients of a control-point field at ``x``.

    ``field`` has shape ``(n_cp, k)``; returns ``(n, k)`` and ``(n, k, 2)``.
    """
    idx, N, dN = eval_basis(space, x)
    c = np.asarray(field)[idx]  # (n, 9, k)
    return np.einsum("na,nak->nk", N, c), np.einsum("nad,nak->nkd", dN, c)


@dataclass(frozen=True)
class QuadratureRule:
    """Per-element Gauss points with basis data cached for assembly."""

    points: np.ndarray      # (nel, nq, 2) physical coordinates
    weights: np.ndarray     # (nel, nq) Gauss weight times Jacobian
    conn: np.ndarray        # (nel, 9) control-point indices
    N: np.ndarray           # (nel, nq, 9)
    dN: np.ndarray          # (nel, nq, 9, 2)
    n_gauss: int = 3
    NT: np.ndarray = field(init=False, repr=False, compare=False)       # (nel, 9, nq)
    dNT: np.ndarray = field(init=False, repr=False, compare=False)      # (nel, nq, 2, 9)
    dN_flat: np.ndarray = field(init=False, repr=False, compare=False)  # (nel, 9, nq*2)

    def __post_init__(self):
        nel, nq = self.weights.shape
        object.__setattr__(self, "NT", np.ascontiguousarray(np.swapaxes(self.N, 1, 2)))
        object.__setattr__(self, "dNT", np.ascontiguousarray(np.swapaxes(self.dN, 2, 3)))
        object.__setattr__(self, "dN_flat", np.ascontiguousarray(
            self.dN.transpose(0, 2, 1, 3).reshape(nel, 9, nq * 2)))

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    @property
    def nq(self) -> int:
        return self.weights.shape[1]


def build_quadrature(space: SplineSpace2D, n_gauss: int = 3) -> QuadratureRule:
    g, w = np.polynomial.legendre.leggauss(n_gauss)
    nel = space.n_elements
    ex = np.arange(nel) % space.nel_x
    ey = np.arange(nel) // space.nel_x
    x0, _, y0, _ = space.domain
    # tensor Gauss points, x fastest
    gx = np.tile(g, n_gauss)
    gy = np.repeat(g, n_gauss)
    wq = np.tile(w, n_gauss) * np.repeat(w, n_gauss)
    px = x0 + (ex[:, None] + 0.5 * (gx[None, :] + 1.0)) * space.hx
    py = y0 + (ey[:, None] + 0.5 * (gy[None, :] + 1.0)) * space.hy
    pts = np.stack([px, py], axis=-1)
    nq = gx.size
    exq = np.repeat(ex, nq)
    eyq = np.repeat(ey, nq)
    idx, N, dN = _eval_local(space, pts.reshape(-1, 2), exq, eyq)
    weights = np.broadcast_to(wq * 0.25 * space.hx * space.hy, (nel, nq)).copy()
    conn = idx.reshape(nel, nq, 9)[:, 0, :].copy()
    return QuadratureRule(pts, weights, conn, N.reshape(nel, nq, 9),
                          dN.reshape(nel, nq, 9, 2), n_gauss)


def scatter(index: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """Deterministic sum of ``values`` rows into ``n`` slots by ``index``.

    ``index`` has shape ``(m,)``; ``values`` ``(m, ...)``. Uses bincount,
    whose summation order is fixed, so results are bitwise reproducible.
    """
    index = np.asarray(index).ravel()
    values = np.asarray(values)
    tail = values.shape[1:]
    flat = values.reshape(index.size, -1)
    out = np.empty((n, flat.shape[1]))
    for k in range(flat.shape[1]):
        out[:, k] = np.bincount(index, weights=flat[:, k], minlength=n)
    return out.reshape((n,) + tail)


def lumped_mass(space: SplineSpace2D, quad: QuadratureRule, integrand) -> np.ndarray:
    """Row-sum lumped mass entries ``sum_q w N_A(q) integrand(q)``.

    ``integrand`` is a scalar, an ``(nel, nq)`` array, or a matrix-valued
    ``(nel, nq, m, m)`` array (block lumping, used for the Euler matrix).
    """
    f = np.asarray(integrand, dtype=float)
    if f.ndim == 0:
        f = np.full(quad.weights.shape, float(f))
    tail = f.shape[2:]
    contrib = (quad.N * quad.weights[:, :, None]).reshape(quad.N.shape + (1,) * len(tail)) \
        * f[:, :, None, ...]
    contrib = contrib.sum(axis=1)  # (nel, 9, ...)
    m = scatter(quad.conn.ravel(), contrib.reshape((-1,) + tail), space.n_cp)
    if not tail:
        assert np.all(m > 0), "lumped mass has nonpositive entries"
    return m


def consistent_mass(space: SplineSpace2D, quad: QuadratureRule) -> sps.csr_matrix:
    wN = quad.N * quad.weights[:, :, None]
    local = np.einsum("eqa,eqb->eab", wN, quad.N)
    rows = np.repeat(quad.conn, 9, axis=1).ravel()
    cols = np.tile(quad.conn, (1, 9)).ravel()
    return sps.csr_matrix((local.ravel(), (rows, cols)), shape=(space.n_cp, space.n_cp))


def project(space: SplineSpace2D, func, n_gauss: int = 3, lumped: bool = True) -> np.ndarray:
    """L2 projection of ``func(points) -> (n, k)`` onto the spline space.

    ``lumped=True`` divides the load by the row-sum mass, which keeps the
    coefficients inside the range of ``func`` (no Gibbs overshoot for
    discontinuous data).
    """
    quad = build_quadrature(space, n_gauss)
    vals = np.asarray(func(quad.points.reshape(-1, 2)), dtype=float)
    squeeze = vals.ndim == 1
    vals = vals.reshape(quad.n_elements, quad.nq, -1)
    load = np.einsum("eqa,eq,eqk->eak", quad.N, quad.weights, vals)
    b = scatter(quad.conn.ravel(), load.reshape(-1, vals.shape[-1]), space.n_cp)
    if lumped:
        coef = b / lumped_mass(space, quad, 1.0)[:, None]
    else:
        M = consistent_mass(space, quad).tocsc()
        coef = np.column_stack([spsolve(M, b[:, k]) for k in range(b.shape[1])])
    return coef[:, 0] if squeeze else coef
