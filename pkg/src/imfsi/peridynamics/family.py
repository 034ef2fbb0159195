"""Families, reproducing-kernel gradient weights and bond gradient operators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .nodes import PDNodeSet

# relative tolerance on the family radius so lattice points exactly at delta are kept
RADIUS_TOL = 1e-9
# reciprocal condition number below which a scaled moment matrix counts as singular
RCOND_MIN = 1e-4


class ConfigurationError(ValueError):
    """Raised when the node cloud cannot support the requested operators."""


@dataclass
class Family:
    """Directed bonds P -> Q stored in CSR order of the owner P."""

    delta: float
    ptr: np.ndarray
    owner: np.ndarray
    nbr: np.ndarray
    xi: np.ndarray
    reverse: np.ndarray
    intact: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.intact is None:
            self.intact = np.ones(self.owner.size, dtype=bool)

    @property
    def n_bonds(self) -> int:
        return self.owner.size

    @property
    def n_nodes(self) -> int:
        return self.ptr.size - 1

    def neighbors(self, p: int) -> np.ndarray:
        return self.nbr[self.ptr[p]:self.ptr[p + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)


def build_families(nodes: PDNodeSet, delta: float) -> Family:
    """All pairs with 0 < |X_Q - X_P| <= delta in the reference configuration."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    X = nodes.X
    n = X.shape[0]
    pairs = cKDTree(X).query_pairs(delta * (1 + RADIUS_TOL), output_type="ndarray")
    if pairs.size:
        d = np.linalg.norm(X[pairs[:, 1]] - X[pairs[:, 0]], axis=1)
        if np.any(d == 0):
            raise ConfigurationError("coincident node positions")
    pairs = pairs.reshape(-1, 2)
    owner = np.concatenate([pairs[:, 0], pairs[:, 1]])
    nbr = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((nbr, owner))
    owner, nbr = owner[order], nbr[order]
    counts = np.bincount(owner, minlength=n)
    if np.any(counts == 0):
        bad = int(np.flatnonzero(counts == 0)[0])
        raise ConfigurationError(f"node {bad} has an empty family (solid too sparse)")
    ptr = np.concatenate([[0], np.cumsum(counts)])
    key = owner * n + nbr
    reverse = np.searchsorted(key, nbr * n + owner)
    return Family(delta, ptr, owner, nbr, X[nbr] - X[owner], reverse)


def kernel(xi: np.ndarray, delta: float) -> np.ndarray:
    """Tensor-product cubic B-spline with rectangular support of half-width delta."""
    s = np.abs(np.asarray(xi) / delta)
    w = np.where(s <= 0.5, 2 / 3 - 4 * s**2 + 4 * s**3,
                 np.where(s <= 1.0, 4 / 3 * (1 - s) ** 3, 0.0))
    return np.prod(w, axis=-1)


def _basis(z: np.ndarray) -> np.ndarray:
    return np.stack([z[..., 0], z[..., 1], z[..., 0] ** 2, z[..., 0] * z[..., 1], z[..., 1] ** 2],
                    axis=-1)


def grouped_rk_weights(X: np.ndarray, V: np.ndarray, delta: float, center: np.ndarray,
                       entry_group: np.ndarray, entry_member: np.ndarray):
    """Quadratic RK gradient weights for many point clouds at once.

    Group ``g`` is centered at node ``center[g]`` and owns the entries with
    ``entry_group == g``. Returns weights (n_entries, 2) such that
    ``sum_Q phi_Q (f_Q - f_P) V_Q`` approximates grad f at the center, and
    a boolean flag per group marking singular moment matrices.
    """
    ng = center.size
    xi = X[entry_member] - X[center[entry_group]]
    z = xi / delta
    H = _basis(z)
    phi = kernel(xi, delta) * V[entry_member]
    M = np.zeros((ng, 5, 5))
    np.add.at(M, entry_group, phi[:, None, None] * H[:, :, None] * H[:, None, :])
    # singular groups get an identity placeholder so the batched solve runs
    ok = np.ones(ng, dtype=bool)
    if ng:
        s = np.linalg.svd(M, compute_uv=False)
        ok = s[:, -1] > RCOND_MIN * np.maximum(s[:, 0], 1e-300)
    Msafe = np.where(ok[:, None, None], M, np.eye(5))
    Minv = np.linalg.inv(Msafe)
    c = np.einsum("eij,ej->ei", Minv[entry_group][:, :2, :], H)
    w = kernel(xi, delta)[:, None] * c / delta
    w[~ok[entry_group]] = 0.0
    return w, ok


def rk_gradient_weights(nodes: PDNodeSet, family: Family, p: int) -> np.ndarray:
    """Gradient weights Phi_PQ for the full family of node ``p``; shape (n_nbr, 2)."""
    members = family.neighbors(p)
    w, ok = grouped_rk_weights(nodes.X, nodes.volume, family.delta, np.array([p]),
                               np.zeros(members.size, dtype=int), members)
    if not ok[0]:
        raise ConfigurationError(f"singular RK moment matrix at node {p}")
    return w


def nodal_rk_weights(nodes: PDNodeSet, family: Family) -> np.ndarray:
    """Full-family weights for every node, aligned with the bond arrays."""
    w, ok = grouped_rk_weights(nodes.X, nodes.volume, family.delta,
                               np.arange(family.n_nodes), family.owner, family.nbr)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise ConfigurationError(f"singular RK moment matrix at node {bad}")
    return w


def gradient_matrices(n_nodes: int, center: np.ndarray, row: np.ndarray, member: np.ndarray,
                      weight: np.ndarray, V: np.ndarray):
    """Sparse operators G_j with (G_j f)_row = sum phi_j (f_member - f_center[row]) V_member."""
    n_rows = center.size
    mats = []
    for j in range(2):
        c = weight[:, j] * V[member]
        diag = np.bincount(row, weights=c, minlength=n_rows)
        rows = np.concatenate([row, np.arange(n_rows)])
        cols = np.concatenate([member, center])
        vals = np.concatenate([c, -diag])
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(n_rows, n_nodes)))
    return mats


class BondGradient:
    """Bond-associated gradient operators.

    Bond P -> Q uses the quadratic RK reconstruction centered at P over the
    subfamily ``(H(P) & H(Q)) | {Q}``, limited to intact bonds. When that
    subset is degenerate the bond falls back to the full family of P; when
    both are degenerate the bond is deactivated.
    """

    def __init__(self, nodes: PDNodeSet, family: Family):
        self.nodes = nodes
        self.family = family
        n = family.n_nodes
        self._key = family.owner.astype(np.int64) * n + family.nbr
        # candidate entries (bond b, member R) with R in H(P)
        counts = family.counts()[family.owner]
        b = np.repeat(np.arange(family.n_bonds), counts)
        start = family.ptr[family.owner]
        offs = np.arange(b.size) - np.repeat(np.cumsum(counts) - counts, counts)
        R = family.nbr[np.repeat(start, counts) + offs]
        Q = family.nbr[b]
        keyQR = Q.astype(np.int64) * n + R
        pos = np.searchsorted(self._key, keyQR)
        pos = np.minimum(pos, self._key.size - 1)
        inQ = self._key[pos] == keyQR
        keep = inQ | (R == Q)
        self.e_bond = b[keep]
        self.e_member = R[keep]
        # bond index P->R and Q->R (or -1) for intact filtering
        self.e_pr = family.ptr[family.owner[self.e_bond]] + offs[keep]
        self.e_qr = np.where(inQ[keep], pos[keep], -1)
        self.active = np.ones(family.n_bonds, dtype=bool)
        self.fallback = np.zeros(family.n_bonds, dtype=bool)
        self._nodal = nodal_rk_weights(nodes, family)
        self.rebuild()

    def _entry_mask(self) -> np.ndarray:
        intact = self.family.intact
        m = intact[self.e_pr]
        qr = self.e_qr
        m &= np.where(qr >= 0, intact[np.maximum(qr, 0)], True)
        return m & intact[self.e_bond]

    def rebuild(self) -> None:
        """Recompute weights and operators from the current intact flags."""
        fam, nodes = self.family, self.nodes
        mask = self._entry_mask()
        eb, em = self.e_bond[mask], self.e_member[mask]
        w, ok = grouped_rk_weights(nodes.X, nodes.volume, fam.delta, fam.owner, eb, em)
        ok &= fam.intact
        bad = fam.intact & ~ok
        rows = [eb[ok[eb]]]
        mem = [em[ok[eb]]]
        wts = [w[ok[eb]]]
        self.fallback = bad.copy()
        if bad.any():
            # fall back on the full (intact) family of the owner
            fb = np.flatnonzero(bad)
            own = fam.owner[fb]
            cnt = fam.counts()[own]
            bb = np.repeat(fb, cnt)
            idx = np.repeat(fam.ptr[own], cnt) + np.arange(bb.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            sel = fam.intact[idx]
            bb, idx = bb[sel], idx[sel]
            local = np.searchsorted(fb, bb)
            w2, ok2 = grouped_rk_weights(nodes.X, nodes.volume, fam.delta, own, local, fam.nbr[idx])
            good = ok2[local]
            rows.append(bb[good])
            mem.append(fam.nbr[idx][good])
            wts.append(w2[good])
            dead = fb[~ok2]
            self.active = fam.intact.copy()
            self.active[dead] = False
        else:
            self.active = fam.intact.copy()
        row = np.concatenate(rows)
        member = np.concatenate(mem)
        weight = np.concatenate(wts)
        self.G = gradient_matrices(fam.n_nodes, fam.owner, row, member, weight, nodes.volume)
        # both derivative directions stacked, so one sparse product serves all columns
        self._G = sp.vstack(self.G, format="csr")

    def gradient(self, *fields: np.ndarray):
        """Per-bond gradients of nodal vector fields (n, 2) -> (n_bonds, 2, 2) each."""
        nb = self.family.n_bonds
        from ._kernels import csr_matmat

        G = self._G
        R = csr_matmat(G.indptr, G.indices, G.data, np.ascontiguousarray(np.hstack(fields)))
        out = []
        for k in range(len(fields)):
            g = np.empty((nb, 2, 2))
            g[:, :, 0] = R[:nb, 2 * k:2 * k + 2]
            g[:, :, 1] = R[nb:, 2 * k:2 * k + 2]
            out.append(g)
        return out[0] if len(fields) == 1 else tuple(out)

    def transpose_apply(self, P: np.ndarray) -> np.ndarray:
        """Adjoint of ``gradient``: (n_bonds, 2, 2) -> nodal (n, 2)."""
        from ._kernels import csr_tmatmat

        G = self._G
        return csr_tmatmat(G.indptr, G.indices, G.data, np.concatenate([P[:, :, 0], P[:, :, 1]]),
                           G.shape[1])
