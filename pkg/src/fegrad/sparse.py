"""Compressed Jacobians from colored JVPs, CSR matrices and a scatter-add
baseline assembler."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .ad import ops as anp
from .ad.api import call_counts, grad_scalar, jvp
from .ad.core import Dual
from .coloring import Coloring, SparsityPattern
from .errors import DimensionMismatch, NonFiniteValue, PatternTooSmall
from .operator import BatchView, Operator


@dataclass(frozen=True)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    @property
    def pattern(self):
        return SparsityPattern(self.n_rows, self.n_cols, self.row_ptr, self.col_idx)

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def to_dense(self):
        return self.to_scipy().toarray()

    @classmethod
    def from_scipy(cls, A):
        A = sp.csr_matrix(A)
        A.sort_indices()
        return cls(A.shape[0], A.shape[1], A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.astype(float))

    def __matmul__(self, x):
        return spmv(self, x)

    def diagonal(self):
        return self.to_scipy().diagonal()


def compressed_jacobian(r, u, coloring: Coloring, parallel=False, workers=None):
    """J_comp[:, c] = (∂r/∂u)·e_c, one jvp per color."""
    u = np.asarray(u, dtype=float)
    if len(coloring.color) != u.size:
        raise DimensionMismatch("coloring size does not match u")

    def column(c):
        seed = (coloring.color == c).astype(float)
        return np.asarray(jvp(r, u, seed), dtype=float).ravel()

    if parallel and coloring.n_colors > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cols = list(ex.map(column, range(coloring.n_colors)))
    else:
        cols = [column(c) for c in range(coloring.n_colors)]
    if not cols:
        return np.zeros((u.size, 0))
    return np.stack(cols, axis=1)


def decompress(J_comp, pattern: SparsityPattern, coloring: Coloring) -> CsrMatrix:
    """K_ij = J_comp[i, color[j]] on the stored entries of ``pattern``."""
    J_comp = np.asarray(J_comp)
    if J_comp.shape != (pattern.n_rows, coloring.n_colors) or len(coloring.color) != pattern.n_cols:
        raise DimensionMismatch(
            f"J_comp {J_comp.shape} vs pattern {pattern.n_rows}x{pattern.n_cols}, {coloring.n_colors} colors"
        )
    vals = J_comp[pattern.rows(), coloring.color[pattern.col_idx]]
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("non-finite Jacobian entries")
    return CsrMatrix(pattern.n_rows, pattern.n_cols, pattern.row_ptr, pattern.col_idx, vals)


def check_pattern(r, u, K: CsrMatrix, rng=None, tol=1e-8):
    """Compare one canonical-basis jvp with the reconstructed column."""
    rng = np.random.default_rng(rng)
    j = int(rng.integers(K.n_cols))
    e = np.zeros(K.n_cols)
    e[j] = 1.0
    exact = np.asarray(jvp(r, np.asarray(u, float), e)).ravel()
    col = K.to_scipy()[:, j].toarray().ravel()
    scale = max(np.abs(exact).max(), 1.0)
    err = np.abs(exact - col).max()
    if err > tol * scale:
        raise PatternTooSmall(f"column {j} differs from its jvp by {err:.3e}")
    return err


def sparse_jacobian(r, u, pattern, coloring, parallel=False, debug=False, workers=None) -> CsrMatrix:
    K = decompress(compressed_jacobian(r, u, coloring, parallel, workers), pattern, coloring)
    if debug:
        check_pattern(r, u, K)
    return K


def sparse_hessian(f, u, pattern, coloring, parallel=False, debug=False, workers=None) -> CsrMatrix:
    """Colored forward-over-reverse Hessian of scalar ``f``."""
    return sparse_jacobian(lambda x: grad_scalar(f, x), u, pattern, coloring, parallel, debug, workers)


def spmv(A: CsrMatrix, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.n_cols:
        raise DimensionMismatch(f"x has length {x.shape[0]}, matrix has {A.n_cols} columns")
    return A.to_scipy() @ x


def element_hessians(density, op: Operator, u, data=None):
    """Dense Hessians of every element energy, shape (N_el, n_loc, n_loc).

    One forward-over-reverse pass per local slot, seeded across all elements
    at once (elements are independent given their local DoFs).
    """
    data = data or {}
    ue = op.gather(np.asarray(u, dtype=float))  # (n_el, n_en, m)
    n_el, n_en, m = ue.shape
    n_loc = n_en * m
    view = BatchView(op, slice(0, n_el), data)

    def total(x):
        psi = density(view, x)
        return anp.sum(anp.einsum("eq,eq->e", psi, view.wdetJ))

    H = np.empty((n_el, n_loc, n_loc))
    for k in range(n_loc):
        seed = np.zeros((n_el, n_loc))
        seed[:, k] = 1.0
        call_counts["hvp"] += 1
        g = grad_scalar(total, Dual(ue, seed.reshape(ue.shape)))
        H[:, :, k] = np.asarray(g.tangent).reshape(n_el, n_loc)
    return H


def element_dofs(op: Operator, m):
    return (op.conn[:, :, None] * m + np.arange(m)).reshape(len(op.conn), -1)


def scatter_add_assemble(density, op: Operator, u, pattern: SparsityPattern, m=None, data=None) -> CsrMatrix:
    """Classical assembly: element Hessians scatter-added into CSR positions."""
    m = op.m if m is None else m
    He = element_hessians(density, op, u, data)
    dofs = element_dofs(op, m)
    n_loc = dofs.shape[1]
    rows = np.repeat(dofs, n_loc, axis=1).ravel()
    cols = np.tile(dofs, (1, n_loc)).ravel()
    # position of (row, col) inside the CSR arrays
    starts = pattern.row_ptr[rows]
    ends = pattern.row_ptr[rows + 1]
    flat_key = rows * pattern.n_cols + cols
    all_keys = pattern.rows() * pattern.n_cols + pattern.col_idx
    pos = np.searchsorted(all_keys, flat_key)
    if np.any(pos < starts) or np.any(pos >= ends) or np.any(all_keys[np.minimum(pos, len(all_keys) - 1)] != flat_key):
        raise PatternTooSmall("element couplings missing from the pattern")
    vals = np.zeros(pattern.nnz)
    np.add.at(vals, pos, He.ravel())
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("non-finite stiffness entries")
    return CsrMatrix(pattern.n_rows, pattern.n_cols, pattern.row_ptr, pattern.col_idx, vals)


def write_matrix_market(A: CsrMatrix, path):
    scipy.io.mmwrite(str(path), A.to_scipy())


def read_matrix_market(path) -> CsrMatrix:
    return CsrMatrix.from_scipy(scipy.io.mmread(str(path)))
