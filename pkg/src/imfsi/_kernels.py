"""Compiled element loops for the background residual.

Mirrors ``flow.pointwise_terms`` point by point; the numpy version stays
the reference implementation and the tests compare the two. Loops run in
a fixed element order so the accumulation is bitwise reproducible.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _solve4(A, b):
    M = A.copy()
    x = b.copy()
    n = 4
    for k in range(n):
        piv = k
        big = abs(M[k, k])
        for i in range(k + 1, n):
            if abs(M[i, k]) > big:
                big = abs(M[i, k])
                piv = i
        if piv != k:
            for j in range(n):
                tmp = M[k, j]
                M[k, j] = M[piv, j]
                M[piv, j] = tmp
            tmp = x[k]
            x[k] = x[piv]
            x[piv] = tmp
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            for j in range(k, n):
                M[i, j] -= f * M[k, j]
            x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        s = x[k]
        for j in range(k + 1, n):
            s -= M[k, j] * x[j]
        x[k] = s / M[k, k]
    return x


@njit(cache=True)
def point_terms(Y, Yt, g, S, gamma, R, mu, kappa, cp, h, inv_dt, supg, dc, c_dc, c_cap, g_floor,
                r, G, A0, nu_fixed):
    """Fill r (4,), G (2,4), A0 (4,4) for one point; return nu_dc.

    A nonnegative ``nu_fixed`` replaces the residual-based viscosity.
    """
    p = Y[0]
    v1 = Y[1]
    v2 = Y[2]
    T = Y[3]
    cv = R / (gamma - 1.0)
    rho = p / (R * T)
    rho_p = 1.0 / (R * T)
    rho_T = -rho / T
    E = cv * T + 0.5 * (v1 * v1 + v2 * v2)
    for a in range(4):
        for b in range(4):
            A0[a, b] = 0.0
    A0[0, 0] = rho_p
    A0[0, 3] = rho_T
    A0[1, 0] = v1 * rho_p
    A0[1, 1] = rho
    A0[1, 3] = v1 * rho_T
    A0[2, 0] = v2 * rho_p
    A0[2, 2] = rho
    A0[2, 3] = v2 * rho_T
    A0[3, 0] = E * rho_p
    A0[3, 1] = rho * v1
    A0[3, 2] = rho * v2
    A0[3, 3] = E * rho_T + rho * cv
    U0 = rho
    U1 = rho * v1
    U2 = rho * v2
    U3 = rho * E
    v = (v1, v2)
    # advective part: A_i g_i = v_i A0 g_i + U * (dv_i/dx_i)
    A0g = np.zeros((2, 4))
    for i in range(2):
        for a in range(4):
            s = 0.0
            for b in range(4):
                s += A0[a, b] * g[b, i]
            A0g[i, a] = s
    divv = g[1, 0] + g[2, 1]
    r[0] = v1 * A0g[0, 0] + v2 * A0g[1, 0] + U0 * divv - S[0]
    r[1] = v1 * A0g[0, 1] + v2 * A0g[1, 1] + U1 * divv - S[1]
    r[2] = v1 * A0g[0, 2] + v2 * A0g[1, 2] + U2 * divv - S[2]
    r[3] = v1 * A0g[0, 3] + v2 * A0g[1, 3] + U3 * divv - S[3]
    # fluxes
    t11 = mu * (2.0 * g[1, 0] - 2.0 / 3.0 * divv)
    t22 = mu * (2.0 * g[2, 1] - 2.0 / 3.0 * divv)
    t12 = mu * (g[1, 1] + g[2, 0])
    # G_i = -(Fp_i - Fd_i)
    G[0, 0] = 0.0
    G[0, 1] = -p + t11
    G[0, 2] = t12
    G[0, 3] = -p * v1 + t11 * v1 + t12 * v2 + kappa * g[3, 0]
    G[1, 0] = 0.0
    G[1, 1] = t12
    G[1, 2] = -p + t22
    G[1, 3] = -p * v2 + t12 * v1 + t22 * v2 + kappa * g[3, 1]
    nu = 0.0
    if not (supg or dc):
        return nu
    # strong residual: A0 Yt + sum_i (A_i + Ap_i) g_i - S
    st = np.empty(4)
    for a in range(4):
        s = r[a]
        for b in range(4):
            s += A0[a, b] * Yt[b]
        st[a] = s
    # pressure Jacobian part
    for i in range(2):
        st[1 + i] += g[0, i]
        st[3] += v[i] * g[0, i] + p * g[1 + i, i]
    c = np.sqrt(gamma * R * T)
    speed = np.sqrt(v1 * v1 + v2 * v2) + c
    if supg:
        nuk = max(mu, kappa / cp) / rho
        inv2 = (2.0 * speed / h) ** 2 + 9.0 * (4.0 * nuk / (h * h)) ** 2 + (2.0 * inv_dt) ** 2
        ts = 1.0 / np.sqrt(inv2) if inv2 > 0.0 else 0.0
        tR = _solve4(A0, st)
        for a in range(4):
            tR[a] *= ts
        # G_i += (A_i + Ap_i) tR
        A0t = np.zeros(4)
        for a in range(4):
            s = 0.0
            for b in range(4):
                s += A0[a, b] * tR[b]
            A0t[a] = s
        for i in range(2):
            dv = tR[1 + i]
            G[i, 0] += v[i] * A0t[0] + U0 * dv
            G[i, 1] += v[i] * A0t[1] + U1 * dv
            G[i, 2] += v[i] * A0t[2] + U2 * dv
            G[i, 3] += v[i] * A0t[3] + U3 * dv
            G[i, 1 + i] += tR[0]
            G[i, 3] += v[i] * tR[0] + p * tR[1 + i]
    if dc and nu_fixed >= 0.0:
        nu = nu_fixed
    elif dc:
        rr = _solve4(A0, st)
        sc0 = p
        sc3 = T
        rn = (rr[0] / sc0) ** 2 + (rr[1] / speed) ** 2 + (rr[2] / speed) ** 2 + (rr[3] / sc3) ** 2
        rn = np.sqrt(rn)
        gn = 0.0
        for i in range(2):
            gn += (g[0, i] / sc0) ** 2 + (g[1, i] / speed) ** 2 + (g[2, i] / speed) ** 2 \
                + (g[3, i] / sc3) ** 2
        gn = np.sqrt(gn)
        cap = c_cap * h * speed
        nu = c_dc * h * rn / max(gn, g_floor / h)
        if nu > cap:
            nu = cap
    if dc:
        if nu > 0.0:
            for i in range(2):
                for a in range(4):
                    G[i, a] += nu * A0g[i, a]
    return nu


@njit(cache=True)
def assemble_elements(conn, N, dN, w, Y, Yt, S, gamma, R, mu, kappa, cp, h, inv_dt,
                      supg, dc, c_dc, c_cap, g_floor, pmin, Tmin, Rout, Mout, nu_field, freeze):
    """Accumulate residual (without mass term) and lumped A0 blocks.

    ``nu_field`` (nel, nq) receives the DC viscosity, or supplies it when
    ``freeze`` is set. Returns (n_clamped, max_nu, first clamped element,
    first clamped point).
    """
    nel, nq, nb = N.shape
    Yq = np.empty(4)
    Ytq = np.empty(4)
    g = np.empty((4, 2))
    r = np.empty(4)
    G = np.empty((2, 4))
    A0 = np.empty((4, 4))
    nclamp = 0
    first_e = -1
    first_q = -1
    numax = 0.0
    for e in range(nel):
        for q in range(nq):
            for k in range(4):
                Yq[k] = 0.0
                Ytq[k] = 0.0
                g[k, 0] = 0.0
                g[k, 1] = 0.0
            for a in range(nb):
                A = conn[e, a]
                Na = N[e, q, a]
                d0 = dN[e, q, a, 0]
                d1 = dN[e, q, a, 1]
                for k in range(4):
                    Yq[k] += Na * Y[A, k]
                    Ytq[k] += Na * Yt[A, k]
                    g[k, 0] += d0 * Y[A, k]
                    g[k, 1] += d1 * Y[A, k]
            if not (Yq[0] >= pmin and Yq[3] >= Tmin):
                nclamp += 1
                if first_e < 0:
                    first_e = e
                    first_q = q
                if not (Yq[0] >= pmin):
                    Yq[0] = pmin
                if not (Yq[3] >= Tmin):
                    Yq[3] = Tmin
            nu = point_terms(Yq, Ytq, g, S[e, q], gamma, R, mu, kappa, cp, h, inv_dt,
                             supg, dc, c_dc, c_cap, g_floor, r, G, A0, nu_field[e, q] if freeze else -1.0)
            nu_field[e, q] = nu
            if nu > numax:
                numax = nu
            wq = w[e, q]
            for a in range(nb):
                A = conn[e, a]
                Na = N[e, q, a] * wq
                d0 = dN[e, q, a, 0] * wq
                d1 = dN[e, q, a, 1] * wq
                for k in range(4):
                    Rout[A, k] += Na * r[k] + d0 * G[0, k] + d1 * G[1, k]
                    for l in range(4):
                        Mout[A, k, l] += Na * A0[k, l]
    return nclamp, numax, first_e, first_q
