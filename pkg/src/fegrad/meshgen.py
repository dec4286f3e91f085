"""Geometry builders for the example problems (beyond plain boxes)."""

from __future__ import annotations

import numpy as np

from .mesh import Block, Mesh, compact, merge_nodes, structured_grid


def _quad_patch_tris(nu, nv, offset=0):
    """Tri3 connectivity of an (nu x nv)-cell patch, u fastest, CCW in (u, v)."""
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="xy")
    i, j = i.ravel(), j.ravel()
    n00 = offset + i + (nu + 1) * j
    n10 = n00 + 1
    n01 = n00 + nu + 1
    n11 = n01 + 1
    t1 = np.column_stack([n00, n10, n11])
    t2 = np.column_stack([n00, n11, n01])
    return np.stack([t1, t2], axis=1).reshape(-1, 3)


def _orient_ccw(coords, conn):
    X = coords[conn]
    a = X[:, 1] - X[:, 0]
    b = X[:, 2] - X[:, 0]
    neg = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] < 0
    conn = conn.copy()
    conn[neg] = conn[neg][:, [0, 2, 1]]
    return conn


def plate_with_hole(R=0.05, half_width=0.5, n_theta=30, n_r=50, grading=2.0) -> Mesh:
    """Right half of a square plate [−W, W]² with a central hole of radius R.

    The domain is x ≥ 0, built from four mapped patches (two per quarter)
    graded towards the hole, then merged. Nodes with x = 0 lie on the
    symmetry line.
    """
    W = half_width
    coords, conns = [], []
    offset = 0
    # upper quarter: patch A spans θ∈[0°,45°] to the edge x=W,
    # patch B spans θ∈[45°,90°] to the edge y=W
    for patch in ("A", "B"):
        tau = np.linspace(0.0, 1.0, n_theta + 1)
        s = np.linspace(0.0, 1.0, n_r + 1) ** grading
        if patch == "A":
            th = tau * np.pi / 4
            outer = np.column_stack([np.full_like(tau, W), W * tau])
        else:
            th = np.pi / 4 + tau * np.pi / 4
            outer = np.column_stack([W * (1 - tau), np.full_like(tau, W)])
        inner = R * np.column_stack([np.cos(th), np.sin(th)])
        # u = tau (fastest), v = s
        P = inner[None, :, :] * (1 - s)[:, None, None] + outer[None, :, :] * s[:, None, None]
        pts = P.reshape(-1, 2)
        coords.append(pts)
        conns.append(_quad_patch_tris(n_theta, n_r, offset))
        offset += len(pts)
    upper = np.vstack(coords)
    conn_up = np.vstack(conns)
    lower = upper * np.array([1.0, -1.0])
    X = np.vstack([upper, lower])
    conn = np.vstack([conn_up, conn_up + len(upper)])
    conn = _orient_ccw(X, conn)
    mesh = Mesh(2, X, (Block("Tri3", conn),))
    mesh = merge_nodes(mesh, tol=1e-9 * W)
    # snap symmetry-line coordinates exactly
    c = mesh.coords.copy()
    c[np.abs(c[:, 0]) < 1e-12, 0] = 0.0
    c[np.abs(c[:, 1]) < 1e-12, 1] = 0.0
    return Mesh(2, c, mesh.blocks)


def icosphere(subdivisions=3, radius=1.0) -> Mesh:
    """Triangulated sphere from a subdivided icosahedron (outward CCW)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edges = np.sort(np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.ravel()
        mids = v[uniq[:, 0]] + v[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        m = len(v) + inv.reshape(3, -1).T  # (n_f, 3): mid of edges 01, 12, 20
        v = np.vstack([v, mids])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
        f = np.vstack(
            [
                np.column_stack([a, m01, m20]),
                np.column_stack([b, m12, m01]),
                np.column_stack([c, m20, m12]),
                np.column_stack([m01, m12, m20]),
            ]
        )
    # make every face CCW seen from outside
    X = v[f]
    n = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
    flip = np.einsum("ek,ek->e", n, X.mean(axis=1)) < 0
    f[flip] = f[flip][:, [0, 2, 1]]
    return Mesh(3, radius * v, (Block("Tri3", f),))


def remove_elements(mesh: Mesh, keep_mask) -> tuple[Mesh, np.ndarray]:
    """Drop elements where ``keep_mask`` is False and compact the nodes.

    Returns the new mesh and the old-to-new node map (−1 for removed nodes).
    """
    b = mesh.blocks[0]
    kept = Block(b.kind, b.conn[keep_mask])
    used = np.zeros(mesh.n_nodes, dtype=bool)
    used[kept.conn.ravel()] = True
    new_ids = np.where(used, np.cumsum(used) - 1, -1)
    out = compact(Mesh(mesh.dim, mesh.coords, (kept,)))
    return out, new_ids


def split_strip(length, height, nx, ny_half) -> tuple[Mesh, np.ndarray, np.ndarray]:
    """Strip [0, length] × [0, height] made of two halves that do not share
    nodes along y = height/2.

    Returns the mesh and the node ids of the lower half's top row and the
    upper half's bottom row (aligned, left to right).
    """
    h = height / 2
    lo = structured_grid(nx, ny_half, extent=((0, length), (0, h)), kind="Tri3")
    hi = structured_grid(nx, ny_half, extent=((0, length), (h, height)), kind="Tri3")
    coords = np.vstack([lo.coords, hi.coords])
    conn = np.vstack([lo.blocks[0].conn, hi.blocks[0].conn + lo.n_nodes])
    lower_row = np.arange(ny_half * (nx + 1), (ny_half + 1) * (nx + 1))
    upper_row = lo.n_nodes + np.arange(nx + 1)
    return Mesh(2, coords, (Block("Tri3", conn),)), lower_row, upper_row
