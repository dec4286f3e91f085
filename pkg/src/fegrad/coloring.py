"""Sparsity patterns from mesh connectivity and constraints, and
distance-2 greedy column coloring."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numba
import numpy as np

from .ad.api import grad_scalar, jvp
from .errors import DimensionMismatch
from .mesh import Mesh


@dataclass(frozen=True)
class SparsityPattern:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    @property
    def nnz(self):
        return len(self.col_idx)

    def rows(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))

    def to_dense(self):
        D = np.zeros((self.n_rows, self.n_cols), dtype=bool)
        D[self.rows(), self.col_idx] = True
        return D

    def transpose(self):
        return pattern_from_entries(self.col_idx, self.rows(), self.n_cols, self.n_rows)

    def is_symmetric(self):
        t = self.transpose()
        return (
            self.n_rows == self.n_cols
            and np.array_equal(self.row_ptr, t.row_ptr)
            and np.array_equal(self.col_idx, t.col_idx)
        )

    def to_json(self):
        return json.dumps(
            {
                "n_rows": self.n_rows,
                "n_cols": self.n_cols,
                "row_ptr": self.row_ptr.tolist(),
                "col_idx": self.col_idx.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            d["n_rows"],
            d["n_cols"],
            np.asarray(d["row_ptr"], dtype=np.int64),
            np.asarray(d["col_idx"], dtype=np.int64),
        )


@dataclass(frozen=True)
class Coloring:
    color: np.ndarray
    n_colors: int

    def seeds(self):
        """Yield (c, seed vector) for every color."""
        for c in range(self.n_colors):
            yield c, (self.color == c).astype(float)

    def to_json(self):
        return json.dumps({"color": self.color.tolist(), "n_colors": self.n_colors})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.asarray(d["color"], dtype=np.int64), int(d["n_colors"]))


def pattern_from_entries(rows, cols, n_rows, n_cols) -> SparsityPattern:
    """CSR structure of the given (row, col) entries; duplicates merged."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    if rows.size and (rows.max() >= n_rows or cols.max() >= n_cols or min(rows.min(), cols.min()) < 0):
        raise DimensionMismatch("entry outside the pattern shape")
    key = np.unique(rows * n_cols + cols)
    r = key // n_cols
    c = key % n_cols
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n_rows), out=row_ptr[1:])
    return SparsityPattern(int(n_rows), int(n_cols), row_ptr, c.astype(np.int64))


def restrict_pattern(pattern: SparsityPattern, rows, cols=None) -> SparsityPattern:
    """Sub-pattern on the given (sorted, unique) row and column subsets."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = rows if cols is None else np.asarray(cols, dtype=np.int64)
    rmap = np.full(pattern.n_rows, -1, dtype=np.int64)
    rmap[rows] = np.arange(len(rows))
    cmap = np.full(pattern.n_cols, -1, dtype=np.int64)
    cmap[cols] = np.arange(len(cols))
    r = rmap[pattern.rows()]
    c = cmap[pattern.col_idx]
    keep = (r >= 0) & (c >= 0)
    return pattern_from_entries(r[keep], c[keep], len(rows), len(cols))


def sparsity_from_mesh(mesh: Mesh, m=1) -> SparsityPattern:
    """DoF coupling through shared elements, DoF index = node·m + component."""
    n = mesh.n_nodes
    node_keys = []
    for b in mesh.blocks:
        c = b.conn
        a = np.repeat(c, c.shape[1], axis=1).ravel()
        bb = np.tile(c, (1, c.shape[1])).ravel()
        node_keys.append(np.unique(a * n + bb))
    keys = np.unique(np.concatenate(node_keys)) if node_keys else np.zeros(0, np.int64)
    na, nb = keys // n, keys % n
    comp = np.arange(m)
    rows = (na[:, None, None] * m + comp[:, None]).repeat(m, axis=2)
    cols = (nb[:, None, None] * m + comp[None, :]).repeat(m, axis=1)
    return pattern_from_entries(rows, cols, n * m, n * m)


def constraint_jacobian_pattern(g, n_dofs, mode="auto") -> SparsityPattern:
    """Structure of dg/du at u = 0, thresholded at exactly zero.

    Rows are obtained by reverse mode (one gradient per constraint) or
    columns by forward probing, whichever needs fewer passes.
    """
    u0 = np.zeros(n_dofs)
    g0 = np.atleast_1d(np.asarray(g(u0), dtype=float))
    n_c = g0.size
    if n_c == 0:
        return pattern_from_entries([], [], 0, n_dofs)
    if mode == "auto":
        mode = "rows" if n_c <= n_dofs else "cols"
    rows, cols = [], []
    if mode == "rows":
        for k in range(n_c):
            gk = grad_scalar(lambda u: g(u)[k], u0)
            nz = np.flatnonzero(gk != 0.0)
            rows.append(np.full(nz.size, k))
            cols.append(nz)
    else:
        e = np.zeros(n_dofs)
        for j in range(n_dofs):
            e[j] = 1.0
            col = np.atleast_1d(jvp(g, u0, e))
            e[j] = 0.0
            nz = np.flatnonzero(col != 0.0)
            rows.append(nz)
            cols.append(np.full(nz.size, j))
    return pattern_from_entries(np.concatenate(rows), np.concatenate(cols), n_c, n_dofs)


def augment_with_constraints(K: SparsityPattern, B: SparsityPattern) -> SparsityPattern:
    """Saddle-point structure [[K, Bᵀ], [B, 0]]."""
    if K.n_rows != K.n_cols:
        raise DimensionMismatch("K pattern must be square")
    if B.n_cols != K.n_cols:
        raise DimensionMismatch(f"B has {B.n_cols} columns, K has {K.n_cols}")
    n, nc = K.n_rows, B.n_rows
    kr, kc = K.rows(), K.col_idx
    br, bc = B.rows(), B.col_idx
    rows = np.concatenate([kr, bc, br + n])
    cols = np.concatenate([kc, br + n, bc])
    return pattern_from_entries(rows, cols, n + nc, n + nc)


@numba.njit(cache=True)
def _greedy_d2(n_cols, row_ptr, col_idx, col_ptr, row_idx):
    color = np.full(n_cols, -1, dtype=np.int64)
    mark = np.full(n_cols + 1, -1, dtype=np.int64)
    n_colors = 0
    for j in range(n_cols):
        for p in range(col_ptr[j], col_ptr[j + 1]):
            r = row_idx[p]
            for q in range(row_ptr[r], row_ptr[r + 1]):
                c = color[col_idx[q]]
                if c >= 0:
                    mark[c] = j
        c = 0
        while mark[c] == j:
            c += 1
        color[j] = c
        if c + 1 > n_colors:
            n_colors = c + 1
    return color, n_colors


def distance2_coloring(pattern: SparsityPattern) -> Coloring:
    """Greedy coloring in ascending column order.

    Each column takes the smallest color not used by any column that shares
    a row with it. Columns with no entries get color 0.
    """
    t = pattern.transpose()
    color, n_colors = _greedy_d2(
        pattern.n_cols, pattern.row_ptr, pattern.col_idx, t.row_ptr, t.col_idx
    )
    if pattern.n_cols and n_colors == 0:
        n_colors = 1
    return Coloring(color, int(n_colors))


def is_valid_coloring(pattern: SparsityPattern, coloring: Coloring) -> bool:
    """Independent check: in every row, the column colors are distinct."""
    if len(coloring.color) != pattern.n_cols or np.any(coloring.color < 0):
        return False
    r = pattern.rows()
    c = coloring.color[pattern.col_idx]
    key = r * max(coloring.n_colors, 1) + c
    return np.unique(key).size == key.size
