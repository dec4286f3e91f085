"""Differentiation entry points: gradient, JVP, HVP and dense Hessian."""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..errors import NonFiniteValue, SizeLimitExceeded, ShapeMismatch
from .core import Dual, Tape, Var, primal, zeros_like

# Incremented on every jvp / hvp evaluation; used to check cost laws.
call_counts = Counter()

DENSE_LIMIT = 2000


def _check_finite(x, what):
    if not np.all(np.isfinite(primal(x))):
        raise NonFiniteValue(f"non-finite {what}")
    if isinstance(x, Dual) and not np.all(np.isfinite(x.tangent)):
        raise NonFiniteValue(f"non-finite tangent in {what}")


def value_and_grad(f, u, *args, **kwargs):
    """Evaluate scalar ``f`` at ``u`` and its reverse-mode gradient.

    A fresh tape is recorded on each call, so branches are differentiated
    along the path actually taken. ``u`` may be a Dual, in which case the
    returned gradient is a Dual (forward over reverse).
    """
    if not isinstance(u, Dual):
        u = np.asarray(u, dtype=float)
    with Tape() as tape:
        x = tape.leaf(u)
        y = f(x, *args, **kwargs)
        if not isinstance(y, Var):
            _check_finite(y, "functional value")
            return y, zeros_like(u)
        if y.shape not in ((), (1,)):
            raise ShapeMismatch(f"functional must return a scalar, got {y.shape}")
        _check_finite(y.value, "functional value")
        (g,) = tape.gradient(y, [x])
    _check_finite(g, "gradient")
    value = y.value
    return value, g


def grad_scalar(f, u, *args, **kwargs):
    """Reverse-mode gradient of scalar functional ``f`` at ``u``."""
    return value_and_grad(f, u, *args, **kwargs)[1]


def _tangent(y):
    if isinstance(y, Dual):
        return np.asarray(y.tangent, dtype=float).copy()
    return np.zeros(np.shape(y))


def jvp(f, u, v, *args, **kwargs):
    """Directional derivative (df/du)·v by forward propagation of duals."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ShapeMismatch(f"direction shape {v.shape} != point shape {u.shape}")
    call_counts["jvp"] += 1
    y = f(Dual(u, v), *args, **kwargs)
    _check_finite(y, "jvp output")
    return _tangent(y)


def hvp(f, u, v, *args, **kwargs):
    """Hessian-vector product of scalar ``f``: forward mode over the gradient."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ShapeMismatch(f"direction shape {v.shape} != point shape {u.shape}")
    call_counts["hvp"] += 1
    g = grad_scalar(f, Dual(u, v), *args, **kwargs)
    return _tangent(g)


def dense_hessian(f, u, *args, limit=DENSE_LIMIT, **kwargs):
    """Dense Hessian, one hvp per column. Meant as a small-scale oracle."""
    u = np.asarray(u, dtype=float)
    n = u.size
    if n > limit:
        raise SizeLimitExceeded(f"dense Hessian of size {n} exceeds limit {limit}")
    H = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        H[:, i] = hvp(f, u, e, *args, **kwargs)
        e[i] = 0.0
    return H


def dense_jacobian(f, u, *args, **kwargs):
    """Dense Jacobian of a vector function, one jvp per column."""
    u = np.asarray(u, dtype=float)
    cols = []
    e = np.zeros(u.size)
    for i in range(u.size):
        e[i] = 1.0
        cols.append(jvp(f, u, e, *args, **kwargs).ravel())
        e[i] = 0.0
    return np.stack(cols, axis=1) if cols else np.zeros((0, 0))
