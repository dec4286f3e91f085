"""Krylov and direct linear solvers, essential-BC condensation and Newton."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ad import ops as anp
from .ad.api import hvp, value_and_grad
from .errors import (
    BreakdownError,
    DimensionMismatch,
    IndexOutOfRange,
    MaxIterationsExceeded,
    SingularMatrix,
    StagnationError,
)
from .sparse import CsrMatrix, sparse_hessian, spmv

log = logging.getLogger(__name__)

DENSE_FALLBACK_LIMIT = 20_000


@dataclass
class LinearOperator:
    n: int
    apply: Callable

    @classmethod
    def from_matrix(cls, A):
        if isinstance(A, CsrMatrix):
            return cls(A.n_rows, lambda v: spmv(A, v))
        A = np.asarray(A, dtype=float)
        return cls(A.shape[0], lambda v: A @ v)

    def __matmul__(self, v):
        return self.apply(v)


def _as_operator(A):
    return A if isinstance(A, LinearOperator) else LinearOperator.from_matrix(A)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_norm: float
    history: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)


def cg_solve(A, b, tol=1e-10, max_iter=None, x0=None, precond=None):
    """Conjugate gradients for SPD ``A``; stops at ‖Ax − b‖ ≤ tol·‖b‖.

    ``precond`` is an optional diagonal (Jacobi) array.
    """
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A.apply(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    target = tol * bnorm
    rn = np.linalg.norm(r)
    hist = [rn]
    if rn <= target or bnorm == 0.0:
        return (np.zeros(n) if bnorm == 0.0 else x), SolveReport(True, 0, rn, hist)
    Minv = None if precond is None else 1.0 / np.asarray(precond, dtype=float)
    z = r if Minv is None else Minv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        Ap = A.apply(p)
        pAp = p @ Ap
        if not pAp > 0.0:
            raise BreakdownError(f"non-positive curvature pᵀAp = {pAp:.3e} at iteration {k}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rn = np.linalg.norm(r)
        hist.append(rn)
        if rn <= target:
            return x, SolveReport(True, k, rn, hist)
        z = r if Minv is None else Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(False, max_iter, rn, hist)


def gmres_solve(A, b, tol=1e-10, restart=50, max_iter=None, x0=None):
    """Restarted GMRES with modified Gram-Schmidt and Givens rotations."""
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(True, 0, 0.0, [0.0])
    target = tol * bnorm
    r = b - A.apply(x)
    beta = np.linalg.norm(r)
    hist = [beta]
    total = 0
    while total < max_iter:
        if beta <= target:
            return x, SolveReport(True, total, beta, hist)
        m = min(restart, max_iter - total, n)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = A.apply(V[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                raise StagnationError("GMRES breakdown with zero Krylov direction")
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            hist.append(abs(g[j + 1]))
            if abs(g[j + 1]) <= target:
                break
            hn = np.linalg.norm(w)
            if hn == 0.0:
                break
            V[j + 1] = w / hn
        y = scipy.linalg.solve_triangular(H[:j_done, :j_done], g[:j_done])
        x_new = x + V[:j_done].T @ y
        r = b - A.apply(x_new)
        beta_new = np.linalg.norm(r)
        if beta_new >= beta * (1.0 - 1e-14) and beta_new > target:
            raise StagnationError(f"GMRES stagnated at residual {beta_new:.3e}")
        x, beta = x_new, beta_new
        hist[-1] = beta
    return x, SolveReport(beta <= target, total, beta, hist)


def direct_solve(K, b):
    """Sparse LU with partial pivoting; dense LU fallback for n ≤ 20 000."""
    b = np.asarray(b, dtype=float)
    if isinstance(K, CsrMatrix):
        A = K.to_scipy().tocsc()
    else:
        A = sp.csc_matrix(np.asarray(K, dtype=float)) if not sp.issparse(K) else K.tocsc()
    n = A.shape[0]
    if A.shape != (n, n) or b.shape[0] != n:
        raise DimensionMismatch("direct_solve expects a square system")
    x = None
    try:
        lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
        x = lu.solve(b)
    except RuntimeError:
        x = None
    if x is None or not np.all(np.isfinite(x)) or not _accurate(A, x, b):
        if n > DENSE_FALLBACK_LIMIT:
            raise SingularMatrix("sparse factorization failed")
        D = A.toarray()
        try:
            # singularity is reported below from the pivots
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(D, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularMatrix(str(exc)) from exc
        if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * max(np.abs(D).max(), 1e-300) * n):
            raise SingularMatrix("matrix is numerically singular")
        x = scipy.linalg.lu_solve((lu, piv), b)
    return x


def _accurate(A, x, b):
    res = np.linalg.norm(A @ x - b, np.inf)
    Anorm = abs(A).sum(axis=1).max()
    return res <= 1e-10 * (Anorm * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf))


# ---------------------------------------------------------------------------
# condensation


@dataclass
class ReducedFunctional:
    """f restricted to free DoFs, with prescribed values lifted back in."""

    f: Callable
    n_dofs: int
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray
    free_dofs: np.ndarray

    def lift(self, u_free):
        base = np.zeros(self.n_dofs)
        base[self.fixed_dofs] = self.fixed_values
        if len(self.free_dofs) == 0:
            return base
        return anp.index_set(base, self.free_dofs, u_free)

    def reduce(self, u_full):
        return np.asarray(u_full, dtype=float)[self.free_dofs]

    def __call__(self, u_free, *args, **kwargs):
        return self.f(self.lift(u_free), *args, **kwargs)

    @property
    def n_free(self):
        return len(self.free_dofs)


def reduced_functional(f, n_dofs, fixed) -> ReducedFunctional:
    """``fixed`` maps DoF index -> value, or is a (dofs, values) pair.

    ``fixed_dofs(nodes, comp, m)`` builds DoF indices from a NodeSet.
    """
    if isinstance(fixed, dict):
        dofs = np.fromiter(fixed.keys(), dtype=np.int64, count=len(fixed))
        vals = np.fromiter(fixed.values(), dtype=float, count=len(fixed))
    else:
        dofs, vals = fixed
        dofs = np.asarray(dofs, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, dtype=float), dofs.shape).copy()
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n_dofs):
        raise IndexOutOfRange("fixed DoF index out of range")
    if np.unique(dofs).size != dofs.size:
        raise IndexOutOfRange("fixed DoF indices must be unique")
    free = np.setdiff1d(np.arange(n_dofs), dofs)
    return ReducedFunctional(f, n_dofs, dofs, vals, free)


def fixed_dofs(nodes, comp, m):
    """DoF indices of component(s) ``comp`` on the given nodes."""
    nodes = np.asarray(nodes, dtype=np.int64)
    comps = np.atleast_1d(comp)
    return (nodes[:, None] * m + comps[None, :]).ravel()


# ---------------------------------------------------------------------------
# Newton


@dataclass
class NewtonOptions:
    tol_abs: float = 1e-12
    tol_rel: float = 1e-10
    max_iter: int = 50
    line_search: bool = False
    inner: str = "cg"
    inner_tol: float = 1e-8
    inner_max_iter: int | None = None
    log_path: str | None = None


def _iteration_logger(path):
    if path is None:
        return None, None
    fh = open(path, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["k", "residual_norm", "inner_iterations"])
    return fh, w


def _armijo(f, u, du, f0, g0, c=1e-4, factor=0.5, max_halvings=30):
    slope = g0 @ du
    # near convergence the predicted decrease drowns in round-off of f
    if abs(slope) <= 1e3 * np.finfo(float).eps * max(abs(f0), 1e-300):
        return 1.0
    t = 1.0
    for _ in range(max_halvings):
        try:
            ft = f(u + t * du)
            ft = float(np.asarray(ft))
        except Exception:
            ft = np.inf
        if np.isfinite(ft) and ft <= f0 + c * t * slope:
            return t
        t *= factor
    return t


def _newton(f, u0, opts: NewtonOptions, solve_step):
    u = np.array(u0, dtype=float)
    fval, g = value_and_grad(f, u)
    r0 = np.linalg.norm(g)
    target = max(opts.tol_abs, opts.tol_rel * r0)
    hist = [r0]
    inner = []
    fh, writer = _iteration_logger(opts.log_path)
    try:
        if writer:
            writer.writerow([0, r0, 0])
        rn = r0
        for k in range(1, opts.max_iter + 1):
            if rn <= target:
                return u, SolveReport(True, k - 1, rn, hist, inner)
            du, n_inner = solve_step(u, g)
            inner.append(n_inner)
            if opts.line_search:
                t = _armijo(lambda x: value_and_grad(f, x)[0], u, du, float(fval), g)
                du = t * du
            u = u + du
            fval, g = value_and_grad(f, u)
            rn = np.linalg.norm(g)
            hist.append(rn)
            log.debug("newton %d |r|=%.3e", k, rn)
            if writer:
                writer.writerow([k, rn, n_inner])
        if rn <= target:
            return u, SolveReport(True, opts.max_iter, rn, hist, inner)
        rep = SolveReport(False, opts.max_iter, rn, hist, inner)
        raise MaxIterationsExceeded(f"Newton did not converge: |r| = {rn:.3e} > {target:.3e}", rep)
    finally:
        if fh:
            fh.close()


def newton_assembled(f, u0, pattern, coloring, opts: NewtonOptions | None = None, **kw):
    """Newton with the colored sparse Hessian and a direct solve per step."""
    opts = opts or NewtonOptions(**kw)

    def step(u, g):
        K = sparse_hessian(f, u, pattern, coloring)
        return direct_solve(K, -g), 1

    return _newton(f, u0, opts, step)


def newton_matrix_free(f, u0, opts: NewtonOptions | None = None, **kw):
    """Newton-Krylov: the inner solver only sees hvp(f, u, ·)."""
    opts = opts or NewtonOptions(**kw)

    def step(u, g):
        A = LinearOperator(u.size, lambda v: hvp(f, u, v))
        if opts.inner == "cg":
            du, rep = cg_solve(A, -g, tol=opts.inner_tol, max_iter=opts.inner_max_iter)
        elif opts.inner == "gmres":
            du, rep = gmres_solve(A, -g, tol=opts.inner_tol, max_iter=opts.inner_max_iter)
        else:
            raise ValueError(f"unknown inner solver {opts.inner!r}")
        return du, rep.iterations

    return _newton(f, u0, opts, step)
