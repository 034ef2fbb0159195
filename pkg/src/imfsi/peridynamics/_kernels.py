"""Fused per-bond kinematics, constitutive update and stress weighting.

Mirrors ``constitutive.stress_update`` followed by the Piola transform in
``solid.force_state``; the tests compare both paths.
"""
from __future__ import annotations

import numpy as np
from numba import njit

SQRT2 = np.sqrt(2.0)


@njit(cache=True)
def bond_update(F, Fd, active, coeff, sigma, eqps, E, nu, sY, H, dt, tol, max_iter):
    nb = F.shape[0]
    T = np.zeros((nb, 2, 2))
    s_out = sigma.copy()
    e_out = eqps.copy()
    k = E / (1.0 - nu * nu)
    G = E / (2.0 * (1.0 + nu))
    k1 = E / (3.0 * (1.0 - nu))
    k2 = 2.0 * G
    plastic = np.isfinite(sY)
    for b in range(nb):
        if not active[b]:
            continue
        a, bb, c, d = F[b, 0, 0], F[b, 0, 1], F[b, 1, 0], F[b, 1, 1]
        J = a * d - bb * c
        i00 = d / J
        i01 = -bb / J
        i10 = -c / J
        i11 = a / J
        L00 = Fd[b, 0, 0] * i00 + Fd[b, 0, 1] * i10
        L01 = Fd[b, 0, 0] * i01 + Fd[b, 0, 1] * i11
        L10 = Fd[b, 1, 0] * i00 + Fd[b, 1, 1] * i10
        L11 = Fd[b, 1, 0] * i01 + Fd[b, 1, 1] * i11
        # midpoint rotation of the stored stress
        w = 0.5 * (L10 - L01) * dt
        den = 1.0 + 0.25 * w * w
        cs = (1.0 - 0.25 * w * w) / den
        sn = w / den
        s11 = sigma[b, 0]
        s22 = sigma[b, 1]
        s12 = sigma[b, 2]
        r11 = cs * cs * s11 - 2.0 * cs * sn * s12 + sn * sn * s22
        r22 = sn * sn * s11 + 2.0 * cs * sn * s12 + cs * cs * s22
        r12 = cs * sn * (s11 - s22) + (cs * cs - sn * sn) * s12
        d11 = L00 * dt
        d22 = L11 * dt
        d12 = 0.5 * (L01 + L10) * dt
        t11 = r11 + k * (d11 + nu * d22)
        t22 = r22 + k * (d22 + nu * d11)
        t12 = r12 + 2.0 * G * d12
        e0 = eqps[b]
        if plastic:
            q = np.sqrt(t11 * t11 - t11 * t22 + t22 * t22 + 3.0 * t12 * t12)
            kap = sY + H * e0
            if q > kap * (1.0 + 1e-14):
                a1 = (t11 + t22) / SQRT2
                a2 = (t11 - t22) / SQRT2
                A = a1 * a1 / 3.0
                B = a2 * a2 + 2.0 * t12 * t12
                dg = 0.0
                for it in range(max_iter):
                    f1 = 1.0 + k1 * dg
                    f2 = 1.0 + k2 * dg
                    xi = A / (f1 * f1) + B / (f2 * f2)
                    dxi = -2.0 * A * k1 / (f1 * f1 * f1) - 2.0 * B * k2 / (f2 * f2 * f2)
                    sq = np.sqrt(2.0 * xi / 3.0)
                    kk = sY + H * (e0 + dg * sq)
                    f = 0.5 * xi - kk * kk / 3.0
                    if abs(f) <= tol * kk * kk:
                        break
                    dep = sq + dg * dxi / (3.0 * sq)
                    df = 0.5 * dxi - 2.0 / 3.0 * kk * H * dep
                    dg = dg - f / df
                f1 = 1.0 + k1 * dg
                f2 = 1.0 + k2 * dg
                b1 = a1 / f1
                b2 = a2 / f2
                t11 = (b1 + b2) / SQRT2
                t22 = (b1 - b2) / SQRT2
                t12 = t12 / f2
                xi = b1 * b1 / 3.0 + b2 * b2 + 2.0 * t12 * t12
                e_out[b] = e0 + dg * np.sqrt(2.0 * xi / 3.0)
        s_out[b, 0] = t11
        s_out[b, 1] = t22
        s_out[b, 2] = t12
        # weighted first Piola-Kirchhoff stress: c J sigma F^-T
        cJ = coeff[b] * J
        T[b, 0, 0] = cJ * (t11 * i00 + t12 * i01)
        T[b, 0, 1] = cJ * (t11 * i10 + t12 * i11)
        T[b, 1, 0] = cJ * (t12 * i00 + t22 * i01)
        T[b, 1, 1] = cJ * (t12 * i10 + t22 * i11)
    return T, s_out, e_out


@njit(cache=True)
def csr_matmat(indptr, indices, data, B):
    """CSR times dense (n, k), reading each stored entry once for all k columns."""
    n_rows = indptr.size - 1
    k = B.shape[1]
    out = np.zeros((n_rows, k))
    for i in range(n_rows):
        for p in range(indptr[i], indptr[i + 1]):
            a = data[p]
            j = indices[p]
            for c in range(k):
                out[i, c] += a * B[j, c]
    return out


@njit(cache=True)
def csr_tmatmat(indptr, indices, data, B, n_cols):
    """Transpose of a CSR matrix (n_cols columns) times dense B, by scattering."""
    k = B.shape[1]
    out = np.zeros((n_cols, k))
    for i in range(indptr.size - 1):
        for p in range(indptr[i], indptr[i + 1]):
            a = data[p]
            j = indices[p]
            for c in range(k):
                out[j, c] += a * B[i, c]
    return out
