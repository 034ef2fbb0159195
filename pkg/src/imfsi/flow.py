"""Compressible Navier-Stokes in pressure-primitive variables Y = (p, v1, v2, T).

Weak form per control point A (W = N_A):

    R_A = int N_A (A0 Y_t + A_i Y_,i - S)
        - int N_A,i (Fp_i - Fd_i)
        + int N_A,k A~_k tau R_strong         (SUPG)
        + int nu_dc N_A,k A0 Y_,k             (discontinuity capturing)
        - int_boundary N_A H

with ``A~_i = A_i + dFp_i/dY`` the full Euler Jacobians and
``R_strong = A0 Y_t + A~_i Y_,i - S``. Array conventions: states are
``(..., 4)``, gradients ``(..., 4, 2)`` (component, direction) and fluxes
``(..., 2, 4)`` (direction, component).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spline import QuadratureRule, SplineSpace2D, eval_basis, lumped_mass, scatter

NV = 4  # p, v1, v2, T


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class FluidMaterial:
    gamma: float = 1.4
    mu: float = 1.81e-5
    prandtl: float = 0.72
    R_gas: float = 1.0e5 / (1.0 * 290.0)

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError("gamma must exceed 1")
        if self.mu < 0 or self.prandtl <= 0 or self.R_gas <= 0:
            raise ValueError("invalid fluid material")

    @property
    def cv(self) -> float:
        return self.R_gas / (self.gamma - 1.0)

    @property
    def cp(self) -> float:
        return self.gamma * self.R_gas / (self.gamma - 1.0)

    @property
    def kappa(self) -> float:
        return self.cp * self.mu / self.prandtl

    def sound_speed(self, T):
        return np.sqrt(self.gamma * self.R_gas * np.asarray(T))


AIR = FluidMaterial()


def density(mat: FluidMaterial, p, T):
    p = np.asarray(p, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(p <= 0) or np.any(T <= 0):
        raise AdmissibilityError("density needs p > 0 and T > 0")
    return p / (mat.R_gas * T)


def conserved(mat: FluidMaterial, Y):
    """U = (rho, rho v, rho e_tot) from pressure-primitive variables."""
    Y = np.asarray(Y, dtype=float)
    p, v, T = Y[..., 0], Y[..., 1:3], Y[..., 3]
    rho = p / (mat.R_gas * T)
    etot = mat.cv * T + 0.5 * np.sum(v * v, axis=-1)
    return np.concatenate([rho[..., None], rho[..., None] * v, (rho * etot)[..., None]], axis=-1)


def advective_flux(mat: FluidMaterial, Y):
    """F_i = U v_i, shape (..., 2, 4)."""
    U = conserved(mat, Y)
    return Y[..., 1:3, None] * U[..., None, :]


def euler_jacobians(mat: FluidMaterial, Y):
    """A0 = dU/dY and advective A_i = dF_i/dY.

    Returns ``A0`` with shape ``(..., 4, 4)`` and ``A`` with shape
    ``(..., 2, 4, 4)``.
    """
    Y = np.asarray(Y, dtype=float)
    p, T = Y[..., 0], Y[..., 3]
    v = Y[..., 1:3]
    R = mat.R_gas
    rho = p / (R * T)
    rho_p = 1.0 / (R * T)
    rho_T = -rho / T
    E = mat.cv * T + 0.5 * np.sum(v * v, axis=-1)
    shape = Y.shape[:-1]
    A0 = np.zeros(shape + (4, 4))
    A0[..., 0, 0] = rho_p
    A0[..., 0, 3] = rho_T
    for k in range(2):
        A0[..., 1 + k, 0] = v[..., k] * rho_p
        A0[..., 1 + k, 1 + k] = rho
        A0[..., 1 + k, 3] = v[..., k] * rho_T
        A0[..., 3, 1 + k] = rho * v[..., k]
    A0[..., 3, 0] = E * rho_p
    A0[..., 3, 3] = E * rho_T + rho * mat.cv
    U = conserved(mat, Y)
    A = v[..., :, None, None] * A0[..., None, :, :]
    for i in range(2):
        A[..., i, :, 1 + i] += U
    return A0, A


def pressure_jacobians(Y):
    """dFp_i/dY for Fp_i = (0, p e_i, p v_i)."""
    Y = np.asarray(Y, dtype=float)
    Ap = np.zeros(Y.shape[:-1] + (2, 4, 4))
    for i in range(2):
        Ap[..., i, 1 + i, 0] = 1.0
        Ap[..., i, 3, 0] = Y[..., 1 + i]
        Ap[..., i, 3, 1 + i] = Y[..., 0]
    return Ap


def fluxes(mat: FluidMaterial, Y, gradY):
    """Pressure flux Fp_i and viscous/thermal flux Fd_i, each ``(..., 2, 4)``.

    Newtonian stress with zero bulk viscosity (Stokes hypothesis) and
    Fourier conduction with kappa = cp mu / Pr.
    """
    Y = np.asarray(Y, dtype=float)
    gradY = np.asarray(gradY, dtype=float)
    p, v = Y[..., 0], Y[..., 1:3]
    shape = Y.shape[:-1]
    Fp = np.zeros(shape + (2, 4))
    for i in range(2):
        Fp[..., i, 1 + i] = p
        Fp[..., i, 3] = p * v[..., i]
    Lv = gradY[..., 1:3, :]  # dv_a/dx_b
    div = Lv[..., 0, 0] + Lv[..., 1, 1]
    tau = mat.mu * (Lv + np.swapaxes(Lv, -1, -2))
    tau[..., 0, 0] -= 2.0 / 3.0 * mat.mu * div
    tau[..., 1, 1] -= 2.0 / 3.0 * mat.mu * div
    Fd = np.zeros(shape + (2, 4))
    Fd[..., :, 1:3] = np.swapaxes(tau, -1, -2)  # Fd_i[1+a] = tau_{a i}
    Fd[..., :, 3] = np.einsum("...ij,...j->...i", tau, v) + mat.kappa * gradY[..., 3, :]
    return Fp, Fd


def tau_scalar(mat: FluidMaterial, Y, h, dt=None):
    """Scalar SUPG time scale from the inverse-square rule.

    tau^-2 = (2/dt)^2 + (2(|v|+c)/h)^2 + 9 (4 nu/h^2)^2, with nu the larger
    of kinematic viscosity and thermal diffusivity.
    """
    Y = np.asarray(Y, dtype=float)
    speed = np.linalg.norm(Y[..., 1:3], axis=-1) + mat.sound_speed(Y[..., 3])
    rho = Y[..., 0] / (mat.R_gas * Y[..., 3])
    nu = np.maximum(mat.mu, mat.kappa / mat.cp) / rho
    inv2 = (2.0 * speed / h) ** 2 + 9.0 * (4.0 * nu / h ** 2) ** 2
    if dt is not None:
        inv2 = inv2 + (2.0 / dt) ** 2
    with np.errstate(divide="ignore"):
        return np.where(inv2 > 0, 1.0 / np.sqrt(inv2), 0.0)


def supg_tau(mat: FluidMaterial, Y, h, dt=None):
    """SUPG matrix tau = tau_s A0^-1 (maps conservation residuals to Y units)."""
    A0, _ = euler_jacobians(mat, Y)
    ts = tau_scalar(mat, Y, h, dt)
    return ts[..., None, None] * np.linalg.inv(A0)


C_DC = 1.0
C_DC_CAP = 0.5
# scaled-gradient floor (relative variation per element) below which Y is treated as uniform
DC_GRAD_FLOOR = 1e-8


def _dc_scales(mat, Y):
    speed = np.linalg.norm(Y[..., 1:3], axis=-1) + mat.sound_speed(Y[..., 3])
    return np.stack([Y[..., 0], speed, speed, Y[..., 3]], axis=-1), speed


def dc_viscosity(mat: FluidMaterial, Y, gradY, residual, h, A0=None):
    """Residual-based isotropic shock-capturing viscosity (m^2/s).

    nu = min(C_DC h |r^| / max(|g^|, DC_GRAD_FLOOR / h), C_DC_CAP h (|v|+c))
    where r^ is the strong residual in Y units (A0^-1 R) scaled by reference
    magnitudes and g^ the scaled Y gradient. The floor keeps round-off in a
    uniform region from driving nu to the cap.
    """
    Y = np.asarray(Y, dtype=float)
    if A0 is None:
        A0, _ = euler_jacobians(mat, Y)
    scale, speed = _dc_scales(mat, Y)
    r = np.linalg.solve(A0, np.asarray(residual, dtype=float)[..., None])[..., 0] / scale
    g = np.asarray(gradY, dtype=float) / scale[..., None]
    rn = np.linalg.norm(r, axis=-1)
    gn = np.sqrt(np.sum(g * g, axis=(-1, -2)))
    cap = C_DC_CAP * h * speed
    nu = C_DC * h * rn / np.maximum(gn, DC_GRAD_FLOOR / h)
    return np.minimum(nu, cap)


@dataclass(frozen=True)
class FluidBC:
    """Wall conditions on the four sides of the background rectangle.

    ``slip`` sides get v.n = 0 imposed strongly on their control points;
    ``flux`` maps a side to ``H(x, Y) -> (n, 4)`` prescribed natural flux.
    Sides in neither set carry zero natural flux.
    """

    slip: tuple = ("left", "right", "bottom", "top")
    flux: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.slip:
            if s in self.flux:
                raise ValueError(f"side {s!r} has two boundary conditions")


NORMAL_COMPONENT = {"left": 1, "right": 1, "bottom": 2, "top": 2}
OUTWARD = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


def slip_dofs(space: SplineSpace2D, bcs: FluidBC):
    """(cp, component) pairs constrained by the free-slip condition."""
    cps, comps = [], []
    for side in bcs.slip:
        c = space.boundary_cps(side)
        cps.append(c)
        comps.append(np.full(c.size, NORMAL_COMPONENT[side]))
    if not cps:
        return np.zeros(0, int), np.zeros(0, int)
    return np.concatenate(cps), np.concatenate(comps)


def apply_slip(space: SplineSpace2D, bcs: FluidBC, arr: np.ndarray) -> np.ndarray:
    cps, comps = slip_dofs(space, bcs)
    arr[cps, comps] = 0.0
    return arr


@dataclass
class AssemblyStats:
    n_clamped: int = 0
    first_clamped: tuple | None = None
    max_nu_dc: float = 0.0


def clamp_state(Y, floors, stats: AssemblyStats | None = None, where=None):
    """Clamp p and T from below; counts and records the first offending point."""
    if floors is None:
        return Y
    pmin, Tmin = floors
    bad = (Y[..., 0] < pmin) | (Y[..., 3] < Tmin) | ~np.isfinite(Y[..., 0]) | ~np.isfinite(Y[..., 3])
    if np.any(bad):
        Y = Y.copy()
        Y[..., 0] = np.where(Y[..., 0] < pmin, pmin, Y[..., 0])
        Y[..., 3] = np.where(Y[..., 3] < Tmin, Tmin, Y[..., 3])
        if stats is not None:
            stats.n_clamped += int(bad.sum())
            if stats.first_clamped is None and where is not None:
                k = np.flatnonzero(bad.ravel())[0]
                stats.first_clamped = tuple(np.asarray(where).reshape(-1, 2)[k].tolist())
    return Y


def pointwise_terms(mat: FluidMaterial, Y, Yt, gradY, h, dt=None, S=None,
                    supg: bool = True, dc: bool = True, nu_fixed=None):
    """Value-tested and gradient-tested integrands at a set of points.

    Returns ``(r, G, A0, nu)``: ``r`` (m, 4) multiplies N_A and excludes the
    mass term; ``G`` (m, 2, 4) multiplies N_A,i. ``nu_fixed`` replaces the
    residual-based DC viscosity.
    """
    A0, A = euler_jacobians(mat, Y)
    gT = np.swapaxes(gradY, -1, -2)[..., None]  # (m, 2, 4, 1)
    r = (A @ gT)[..., 0].sum(axis=1)
    if S is not None:
        r -= S
    Fp, Fd = fluxes(mat, Y, gradY)
    G = -(Fp - Fd)
    nu = np.zeros(Y.shape[0])
    if supg or dc:
        Ap = pressure_jacobians(Y)
        At = A + Ap
        strong = (A0 @ Yt[..., None])[..., 0] + (At @ gT)[..., 0].sum(axis=1)
        if S is not None:
            strong -= S
        if supg:
            ts = tau_scalar(mat, Y, h, dt)
            tR = ts[:, None] * np.linalg.solve(A0, strong[..., None])[..., 0]
            G += (At @ tR[:, None, :, None])[..., 0]
        if dc:
            if nu_fixed is None:
                nu = dc_viscosity(mat, Y, gradY, strong, h, A0=A0)
            else:
                nu = np.asarray(nu_fixed, dtype=float).reshape(-1)
            G += nu[:, None, None] * (A0[:, None] @ gT)[..., 0]
    return r, G, A0, nu


def _boundary_flux(space: SplineSpace2D, bcs: FluidBC, Y: np.ndarray) -> np.ndarray:
    out = np.zeros((space.n_cp, NV))
    if not bcs.flux:
        return out
    g, w = np.polynomial.legendre.leggauss(3)
    x0, x1, y0, y1 = space.domain
    for side, H in bcs.flux.items():
        if side in ("bottom", "top"):
            a = x0 + (np.arange(space.nel_x)[:, None] + 0.5 * (g + 1)) * space.hx
            pts = np.column_stack([a.ravel(), np.full(a.size, y0 if side == "bottom" else y1)])
            wq = np.tile(w * 0.5 * space.hx, space.nel_x)
        else:
            a = y0 + (np.arange(space.nel_y)[:, None] + 0.5 * (g + 1)) * space.hy
            pts = np.column_stack([np.full(a.size, x0 if side == "left" else x1), a.ravel()])
            wq = np.tile(w * 0.5 * space.hy, space.nel_y)
        idx, N, _ = eval_basis(space, pts)
        c = Y[idx]
        Yb = np.einsum("na,nak->nk", N, c)
        Hv = np.asarray(H(pts, Yb), dtype=float)
        out -= scatter(idx.ravel(), (N[:, :, None] * (wq[:, None] * Hv)[:, None, :]).reshape(-1, NV),
                       space.n_cp)
    return out


def lumped_fluid_mass(space: SplineSpace2D, quad: QuadratureRule, Y: np.ndarray,
                      mat: FluidMaterial, floors=None, mask=None) -> np.ndarray:
    """Block-lumped A0 mass: ``(n_cp, 4, 4)`` with entries sum_q w N_A A0(Y^h(q))."""
    Yq = np.einsum("eqa,eak->eqk", quad.N, Y[quad.conn])
    Yq = clamp_state(Yq, floors)
    A0, _ = euler_jacobians(mat, Yq)
    if mask is not None:
        A0 = A0 * mask[..., None, None]
    return lumped_mass(space, quad, A0)


def fluid_terms(space: SplineSpace2D, quad: QuadratureRule, Y: np.ndarray, Yt: np.ndarray,
                mat: FluidMaterial, source=None, mask=None, dt=None, floors=None,
                supg: bool = True, dc: bool = True, stats: AssemblyStats | None = None,
                backend: str = "numba", nu=None, freeze_nu: bool = False):
    """Element-quadrature fluid forms without the mass term.

    Returns ``(R, M)``: the residual contributions ``(n_cp, 4)`` of the
    Galerkin, SUPG and DC forms, and the block-lumped A0 mass ``(n_cp, 4, 4)``.
    ``nu`` is an optional (nel, nq) array that receives the DC viscosity,
    or provides it when ``freeze_nu`` is set.
    """
    nel, nq = quad.weights.shape
    S = None
    if source is not None:
        S = np.asarray(source(quad.points.reshape(-1, 2)), dtype=float).reshape(nel, nq, NV)
    w = quad.weights if mask is None else quad.weights * mask
    if backend == "numba":
        from ._kernels import assemble_elements

        R = np.zeros((space.n_cp, NV))
        M = np.zeros((space.n_cp, NV, NV))
        nu_arr = nu if nu is not None else np.zeros((nel, nq))
        pmin, Tmin = floors if floors is not None else (-np.inf, -np.inf)
        nclamp, numax, fe, fq = assemble_elements(
            quad.conn, quad.N, quad.dN, np.ascontiguousarray(w), np.ascontiguousarray(Y),
            np.ascontiguousarray(Yt), S if S is not None else np.zeros((nel, nq, NV)),
            mat.gamma, mat.R_gas, mat.mu, mat.kappa, mat.cp, space.h,
            0.0 if dt is None else 1.0 / dt, supg, dc, C_DC, C_DC_CAP, DC_GRAD_FLOOR, pmin, Tmin, R, M,
            nu_arr, bool(freeze_nu and nu is not None))
        if stats is not None:
            stats.n_clamped += int(nclamp)
            stats.max_nu_dc = max(stats.max_nu_dc, float(numax))
            if nclamp and stats.first_clamped is None:
                stats.first_clamped = tuple(quad.points[fe, fq].tolist())
        return R, M
    Ye = Y[quad.conn]
    Yq = quad.N @ Ye
    Ytq = quad.N @ Yt[quad.conn]
    gq = np.swapaxes(quad.dNT @ Ye[:, None], -1, -2)  # (nel, nq, 4, 2)
    Yq = clamp_state(Yq, floors, stats, quad.points)
    m = nel * nq
    fixed = nu if (freeze_nu and nu is not None) else None
    r, G, A0, nu_q = pointwise_terms(mat, Yq.reshape(m, NV), Ytq.reshape(m, NV),
                                     gq.reshape(m, NV, 2), space.h, dt,
                                     None if S is None else S.reshape(m, NV), supg, dc, fixed)
    if nu is not None and fixed is None:
        nu[...] = nu_q.reshape(nel, nq)
    if stats is not None and nu_q.size:
        stats.max_nu_dc = max(stats.max_nu_dc, float(nu_q.max()))
    r = r.reshape(nel, nq, NV) * w[..., None]
    G = G.reshape(nel, nq, 2, NV) * w[..., None, None]
    local = quad.NT @ r + quad.dN_flat @ G.reshape(nel, nq * 2, NV)
    R = scatter(quad.conn.ravel(), local.reshape(-1, NV), space.n_cp)
    A0e = A0.reshape(nel, nq, NV, NV)
    if mask is not None:
        A0e = A0e * mask[..., None, None]
    return R, lumped_mass(space, quad, A0e)


def assemble_fluid_residual(space: SplineSpace2D, Y: np.ndarray, Yt: np.ndarray,
                            mat: FluidMaterial, bcs: FluidBC | None = None, source=None,
                            quad: QuadratureRule | None = None, mask=None, dt=None,
                            floors=None, supg: bool = True, dc: bool = True,
                            include_mass: bool = True, mass_blocks=None,
                            apply_bcs: bool = True, stats: AssemblyStats | None = None,
                            backend: str = "numba"):
    """Background residual vector ``(n_cp, 4)``.

    The mass form uses the block-lumped matrix (``mass_blocks`` if given).
    ``source(x) -> (n, 4)`` is the volume source; ``mask`` an optional
    ``(nel, nq)`` weight scaling. With ``apply_bcs`` the free-slip normal
    momentum rows are zeroed.
    """
    from .spline import build_quadrature

    bcs = bcs if bcs is not None else FluidBC()
    quad = quad if quad is not None else build_quadrature(space)
    R, M = fluid_terms(space, quad, Y, Yt, mat, source, mask, dt, floors, supg, dc, stats,
                       backend)
    if include_mass:
        M = M if mass_blocks is None else mass_blocks
        R += (M @ Yt[:, :, None])[:, :, 0]
    R += _boundary_flux(space, bcs, Y)
    if apply_bcs:
        apply_slip(space, bcs, R)
    return R


def assemble_point_residual(space: SplineSpace2D, x: np.ndarray, weights: np.ndarray,
                            Y: np.ndarray, Yt: np.ndarray, mat: FluidMaterial, dt=None,
                            floors=None, supg: bool = True, dc: bool = True,
                            include_mass: bool = False, source=None, basis=None):
    """Fluid forms integrated with point quadrature (points ``x``, weights).

    Used to evaluate the fluid forms over the solid subdomain with PD nodes
    as quadrature points. Returns the residual and the lumped A0 blocks of
    the same quadrature.
    """
    idx, N, dN = basis if basis is not None else eval_basis(space, x)
    c = Y[idx]
    Yp = clamp_state(np.einsum("na,nak->nk", N, c), floors)
    Ytp = np.einsum("na,nak->nk", N, Yt[idx])
    gp = np.einsum("nad,nak->nkd", dN, c)
    S = None if source is None else np.asarray(source(x), dtype=float)
    r, G, A0, _ = pointwise_terms(mat, Yp, Ytp, gp, space.h, dt, S, supg, dc)
    w = np.asarray(weights, dtype=float)
    if include_mass:
        r = r + np.einsum("nkl,nl->nk", A0, Ytp)
    local = N[:, :, None] * (w[:, None] * r)[:, None, :] \
        + np.einsum("nad,ndk->nak", dN, G * w[:, None, None])
    R = scatter(idx.ravel(), local.reshape(-1, NV), space.n_cp)
    blocks = scatter(idx.ravel(),
                     (N[:, :, None, None] * (w[:, None, None] * A0)[:, None]).reshape(-1, NV, NV),
                     space.n_cp)
    return R, blocks
