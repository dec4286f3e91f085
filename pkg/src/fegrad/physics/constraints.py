"""Multi-point constraints: rigid-body lift, Lagrangian, periodicity."""

from __future__ import annotations

import numpy as np

from ..ad import ops as anp
from ..errors import DimensionMismatch


def rotation_matrix(theta):
    c, s = anp.cos(theta), anp.sin(theta)
    return anp.stack([anp.stack([c, -s]), anp.stack([s, c])])


def rigid_body_lift(u_full, rigid, center, nodes, coords):
    """Overwrite displacements of ``nodes`` with the rigid motion
    (u_x, u_y) + (R(θ)v − v), v = x − center. 2D, any scalar type."""
    nodes = np.asarray(nodes, dtype=np.int64)
    n_nodes = len(coords)
    v = np.asarray(coords, dtype=float)[nodes] - np.asarray(center, dtype=float)
    R = rotation_matrix(anp.getitem(rigid, 2))
    t = anp.getitem(rigid, slice(0, 2))
    disp = anp.einsum("ij,nj->ni", R, v) - v + anp.reshape(t, (1, 2))
    u2 = anp.reshape(u_full, (n_nodes, 2))
    out = anp.index_set(u2, nodes, disp)
    return anp.reshape(out, (2 * n_nodes,)) if len(anp.shape(u_full)) == 1 else out


def lagrangian(psi, g, z, n_u):
    """L(u, λ) = Ψ(u) + λ·g(u) with z = (u, λ) and u = z[:n_u]."""
    u = anp.getitem(z, slice(0, n_u))
    lam = anp.getitem(z, slice(n_u, None))
    gu = g(u)
    if anp.shape(gu) != anp.shape(lam):
        raise DimensionMismatch(f"{anp.shape(lam)} multipliers for {anp.shape(gu)} constraints")
    return psi(u) + anp.sum(lam * gu)


def periodicity_constraints(u, pairs, eps_macro=None, coords=None, m=2):
    """ũ[slave] − ũ[master] per pair and component, flattened.

    If ``eps_macro`` is given, ``u`` is the total displacement and the
    fluctuation is ũ = u − ε̂x.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n_nodes = int(np.prod(anp.shape(u))) // m
    un = anp.reshape(u, (n_nodes, m))
    if eps_macro is not None:
        un = un - np.asarray(coords, dtype=float) @ np.asarray(eps_macro, dtype=float).T
    diff = anp.getitem(un, pairs[:, 1]) - anp.getitem(un, pairs[:, 0])
    return anp.reshape(diff, (pairs.shape[0] * m,))
