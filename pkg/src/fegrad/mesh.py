"""Mesh container, structured generators, file I/O and geometric queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import element as el
from .ad import ops as anp
from .errors import (
    DimensionMismatch,
    ParseError,
    PointOutsideMesh,
    UnmatchedNode,
    UnsupportedElement,
)

GMSH_TYPES = {1: "Line2", 2: "Tri3", 3: "Quad4", 4: "Tet4"}
GMSH_CODES = {v: k for k, v in GMSH_TYPES.items()}
# gmsh point elements carry no connectivity we use; they are skipped on load
_GMSH_IGNORED = {15}


@dataclass(frozen=True)
class Block:
    kind: str
    conn: np.ndarray  # (N_el, n_en), 0-based

    def __post_init__(self):
        kind = el.get_kind(self.kind)
        conn = np.ascontiguousarray(self.conn, dtype=np.int64)
        if conn.ndim != 2 or conn.shape[1] != kind.n_en:
            raise DimensionMismatch(
                f"{kind.tag} connectivity must have {kind.n_en} columns, got {conn.shape}"
            )
        object.__setattr__(self, "kind", kind.tag)
        object.__setattr__(self, "conn", conn)

    @property
    def n_elements(self):
        return len(self.conn)


@dataclass(frozen=True)
class Mesh:
    dim: int
    coords: np.ndarray
    blocks: tuple = field(default_factory=tuple)

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != self.dim:
            raise DimensionMismatch(f"coords shape {coords.shape} does not match dim {self.dim}")
        blocks = tuple(b if isinstance(b, Block) else Block(*b) for b in self.blocks)
        for b in blocks:
            if b.conn.size and (b.conn.min() < 0 or b.conn.max() >= len(coords)):
                raise DimensionMismatch(f"{b.kind} connectivity refers to missing nodes")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_nodes(self):
        return len(self.coords)

    def block(self, kind=None) -> Block:
        """The block of the given kind (the first block if ``kind`` is None)."""
        if kind is None:
            return self.blocks[0]
        tag = el.get_kind(kind).tag
        if tag == "Tri3Manifold":
            tag = "Tri3"
        for b in self.blocks:
            if b.kind == tag:
                return b
        raise UnsupportedElement(f"mesh has no {tag} block")

    def element_kind(self, block: Block) -> el.ElementKind:
        if block.kind == "Tri3" and self.dim == 3:
            return el.TRI3_MANIFOLD
        return el.get_kind(block.kind)

    def bbox_diagonal(self):
        return float(np.linalg.norm(self.coords.max(0) - self.coords.min(0)))

    def default_tol(self):
        return 1e-8 * max(self.bbox_diagonal(), 1e-300)

    def validate(self):
        """Raise DegenerateElement if any element has detJ <= eps at a quad point."""
        for b in self.blocks:
            kind = self.element_kind(b)
            rule = el.reference_rule(kind)
            X = self.coords[b.conn][:, None]
            el.jacobian(kind, np.broadcast_to(rule.points, (1,) + rule.points.shape), X)
        return self


@dataclass(frozen=True)
class NodeSet:
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.unique(np.asarray(self.indices, dtype=np.int64)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices.tolist())

    def __array__(self, dtype=None, copy=None):
        return self.indices if dtype is None else self.indices.astype(dtype)

    def union(self, other):
        return NodeSet(np.concatenate([self.indices, np.asarray(other)]))


@dataclass(frozen=True)
class PointEmbedding:
    element_ids: np.ndarray  # (n_pts,)
    bary: np.ndarray  # (n_pts, n_en)
    kind: str = "Tri3"

    def interpolate(self, mesh: Mesh, nodal):
        """Interpolate nodal data (N_nodes, m), any scalar type, to the points."""
        conn = mesh.block(self.kind).conn[self.element_ids]
        vals = anp.getitem(nodal, conn)  # (n_pts, n_en, m)
        return anp.einsum("pam,pa->pm", vals, self.bary)


# ---------------------------------------------------------------------------
# generators


def _axis(n, lo, hi):
    return np.linspace(lo, hi, n + 1)


def structured_grid(nx, ny, nz=None, extent=None, kind="Tri3") -> Mesh:
    """Structured grid over a box; node numbering is row-major (x fastest).

    Tri3 splits each quad along its lower-left to upper-right diagonal and
    Tet4 splits each hex into six tetrahedra sharing the main diagonal.
    """
    tag = el.get_kind(kind).tag
    dim = 2 if nz is None else 3
    if nx < 1 or ny < 1 or (nz is not None and nz < 1):
        raise DimensionMismatch("cell counts must be >= 1")
    if (dim == 2 and tag not in ("Tri3", "Quad4")) or (dim == 3 and tag != "Tet4"):
        raise DimensionMismatch(f"{tag} is not a {dim}D grid element")
    if extent is None:
        extent = ((0.0, 1.0),) * dim
    if len(extent) != dim:
        raise DimensionMismatch("extent must give one (lo, hi) pair per axis")

    if dim == 2:
        x = _axis(nx, *extent[0])
        y = _axis(ny, *extent[1])
        X, Y = np.meshgrid(x, y, indexing="xy")
        coords = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        i, j = i.ravel(), j.ravel()
        n00 = i + (nx + 1) * j
        n10 = n00 + 1
        n01 = n00 + nx + 1
        n11 = n01 + 1
        if tag == "Quad4":
            conn = np.column_stack([n00, n10, n11, n01])
        else:
            t1 = np.column_stack([n00, n10, n11])
            t2 = np.column_stack([n00, n11, n01])
            conn = np.stack([t1, t2], axis=1).reshape(-1, 3)
        return Mesh(2, coords, (Block(tag, conn),))

    x = _axis(nx, *extent[0])
    y = _axis(ny, *extent[1])
    z = _axis(nz, *extent[2])
    Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    base = (i + (nx + 1) * (j + (ny + 1) * k)).ravel()
    sx, sy, sz = 1, nx + 1, (nx + 1) * (ny + 1)
    step = {0: sx, 1: sy, 2: sz}
    tets = []
    for perm in _KUHN_PERMS:
        a = 0
        offs = [0]
        for ax in perm:
            a += step[ax]
            offs.append(a)
        offs = np.array(offs)
        if _perm_parity(perm):
            offs = offs[[0, 2, 1, 3]]
        tets.append(base[:, None] + offs[None, :])
    conn = np.stack(tets, axis=1).reshape(-1, 4)
    return Mesh(3, coords, (Block("Tet4", conn),))


_KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def _perm_parity(p):
    # odd permutations give negatively oriented Kuhn simplices
    inv = sum(1 for a in range(3) for b in range(a + 1, 3) if p[a] > p[b])
    return inv % 2 == 1


def line_mesh(points, dim=None) -> Mesh:
    """A chain of Line2 elements through the given points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    conn = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return Mesh(dim or pts.shape[1], pts, (Block("Line2", conn),))


def merge_nodes(mesh: Mesh, tol=None) -> Mesh:
    """Merge coincident nodes (within tol) and drop unused ones."""
    tol = mesh.default_tol() if tol is None else tol
    tree = cKDTree(mesh.coords)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    rep = np.arange(mesh.n_nodes)
    # each cluster of coincident nodes maps to its lowest index
    if len(pairs):
        n = mesh.n_nodes
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        first = np.full(labels.max() + 1, n)
        np.minimum.at(first, labels, np.arange(n))
        rep = first[labels]
    blocks = [Block(b.kind, rep[b.conn]) for b in mesh.blocks]
    return compact(Mesh(mesh.dim, mesh.coords, tuple(blocks)))


def compact(mesh: Mesh) -> Mesh:
    """Drop nodes not referenced by any element, renumbering in order."""
    used = np.zeros(mesh.n_nodes, dtype=bool)
    for b in mesh.blocks:
        used[b.conn.ravel()] = True
    new = np.cumsum(used) - 1
    blocks = tuple(Block(b.kind, new[b.conn]) for b in mesh.blocks)
    return Mesh(mesh.dim, mesh.coords[used], blocks)


# ---------------------------------------------------------------------------
# file I/O


def load_mesh(path, format=None) -> Mesh:
    path = Path(path)
    if format is None:
        format = "internal-json" if path.suffix == ".json" else "gmsh22"
    text = path.read_text()
    if format == "gmsh22":
        return parse_gmsh22(text)
    if format == "internal-json":
        return mesh_from_json(text)
    raise ParseError(f"unknown mesh format {format!r}")


def save_mesh(mesh: Mesh, path, format=None):
    path = Path(path)
    if format is None:
        format = "internal-json" if path.suffix == ".json" else "gmsh22"
    if format == "internal-json":
        path.write_text(mesh_to_json(mesh))
    elif format == "gmsh22":
        path.write_text(format_gmsh22(mesh))
    else:
        raise ParseError(f"unknown mesh format {format!r}")


def mesh_to_json(mesh: Mesh) -> str:
    return json.dumps(
        {
            "dim": mesh.dim,
            "coords": mesh.coords.ravel().tolist(),
            "blocks": [
                {"kind": b.kind, "connectivity": b.conn.ravel().tolist()} for b in mesh.blocks
            ],
        }
    )


def mesh_from_json(text) -> Mesh:
    try:
        data = json.loads(text)
        dim = int(data["dim"])
        coords = np.asarray(data["coords"], dtype=float).reshape(-1, dim)
        blocks = []
        for b in data["blocks"]:
            kind = el.get_kind(b["kind"])
            conn = np.asarray(b["connectivity"], dtype=np.int64).reshape(-1, kind.n_en)
            blocks.append(Block(kind.tag, conn))
    except UnsupportedElement:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed mesh JSON: {exc}") from exc
    return Mesh(dim, coords, tuple(blocks))


def _section(lines, name):
    try:
        start = lines.index(f"${name}")
        end = lines.index(f"$End{name}", start)
    except ValueError:
        raise ParseError(f"missing ${name} section") from None
    return lines[start + 1 : end]


def parse_gmsh22(text) -> Mesh:
    """Parse the ASCII MSH 2.2 subset ($Nodes, $Elements)."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    fmt = _section(lines, "MeshFormat") if "$MeshFormat" in lines else None
    if fmt and not fmt[0].startswith("2"):
        raise ParseError(f"unsupported MSH version {fmt[0].split()[0]}")
    try:
        nodes = _section(lines, "Nodes")
        n = int(nodes[0])
        rows = np.array([ln.split() for ln in nodes[1 : n + 1]], dtype=float)
        if rows.shape != (n, 4):
            raise ParseError("node count does not match $Nodes header")
        ids = rows[:, 0].astype(np.int64)
        xyz = rows[:, 1:]
        lookup = {int(i): k for k, i in enumerate(ids)}

        elems = _section(lines, "Elements")
        ne = int(elems[0])
        if len(elems) - 1 < ne:
            raise ParseError("element count does not match $Elements header")
        by_kind = {}
        for ln in elems[1 : ne + 1]:
            parts = [int(p) for p in ln.split()]
            etype, ntags = parts[1], parts[2]
            if etype in _GMSH_IGNORED:
                continue
            if etype not in GMSH_TYPES:
                raise UnsupportedElement(f"gmsh element type {etype} is not supported")
            tag = GMSH_TYPES[etype]
            node_ids = parts[3 + ntags :]
            if len(node_ids) != el.KINDS[tag].n_en:
                raise ParseError(f"element {parts[0]} has {len(node_ids)} nodes")
            by_kind.setdefault(tag, []).append([lookup[i] for i in node_ids])
    except (ValueError, IndexError, KeyError) as exc:
        raise ParseError(f"malformed gmsh file: {exc}") from exc

    if "Tet4" in by_kind:
        dim = 3
    elif np.allclose(xyz[:, 2], 0.0):
        dim = 2
    else:
        dim = 3
    order = [t for t in ("Tet4", "Quad4", "Tri3", "Line2") if t in by_kind]
    blocks = tuple(Block(t, np.array(by_kind[t], dtype=np.int64)) for t in order)
    return Mesh(dim, xyz[:, :dim], blocks)


def format_gmsh22(mesh: Mesh) -> str:
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_nodes)]
    xyz = np.zeros((mesh.n_nodes, 3))
    xyz[:, : mesh.dim] = mesh.coords
    out += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(xyz.tolist())]
    out += ["$EndNodes", "$Elements"]
    rows = []
    for b in mesh.blocks:
        code = GMSH_CODES[b.kind]
        for c in b.conn.tolist():
            rows.append(f"{len(rows) + 1} {code} 2 0 0 " + " ".join(str(i + 1) for i in c))
    out += [str(len(rows))] + rows + ["$EndElements"]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True)
class Plane:
    """Points with x[axis] == value (within tol)."""

    axis: int
    value: float
    tol: float | None = None

    def __call__(self, coords, tol):
        tol = self.tol if self.tol is not None else tol
        return np.abs(coords[:, self.axis] - self.value) <= tol


@dataclass(frozen=True)
class Box:
    """Points inside the closed box [lo, hi] (within tol)."""

    lo: tuple
    hi: tuple
    tol: float | None = None

    def __call__(self, coords, tol):
        tol = self.tol if self.tol is not None else tol
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((coords >= lo - tol) & (coords <= hi + tol), axis=1)


def boundary_nodes(mesh: Mesh, selector, tol=None) -> NodeSet:
    """Nodes whose coordinates satisfy ``selector`` (Plane, Box or callable)."""
    tol = mesh.default_tol() if tol is None else tol
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    mask = np.asarray(selector(mesh.coords, tol), dtype=bool)
    return NodeSet(np.flatnonzero(mask))


_FACETS = {
    "Line2": [[0], [1]],
    "Tri3": [[0, 1], [1, 2], [2, 0]],
    "Quad4": [[0, 1], [1, 2], [2, 3], [3, 0]],
    "Tet4": [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]],
}


def boundary_facets(mesh: Mesh, block: Block | None = None) -> np.ndarray:
    """Facets (as node lists, orientation kept) belonging to exactly one element."""
    block = block or mesh.blocks[0]
    loc = np.array(_FACETS[block.kind])
    facets = block.conn[:, loc].reshape(-1, loc.shape[1])
    key = np.sort(facets, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return facets[counts[inv.ravel()] == 1]


def boundary_edge_mesh(mesh: Mesh, nodes: NodeSet | None = None) -> Mesh:
    """Line2 mesh of the 2D boundary edges whose nodes all lie in ``nodes``.

    The node numbering and coordinates are shared with ``mesh``, so an
    operator over the result acts directly on the global DoF vector.
    """
    if mesh.dim != 2:
        raise DimensionMismatch("boundary_edge_mesh expects a 2D mesh")
    edges = boundary_facets(mesh)
    if nodes is not None:
        keep = np.all(np.isin(edges, np.asarray(nodes)), axis=1)
        edges = edges[keep]
    return Mesh(2, mesh.coords, (Block("Line2", edges),))


def all_boundary_nodes(mesh: Mesh) -> NodeSet:
    return NodeSet(np.unique(boundary_facets(mesh)))


def _simplex_block(mesh):
    for b in mesh.blocks:
        if b.kind in ("Tri3", "Tet4") and el.get_kind(b.kind).d_ref == mesh.dim:
            return b
    raise UnsupportedElement("point location needs a Tri3 (2D) or Tet4 (3D) block")


def _barycentric(X, p):
    """Barycentric coordinates of point(s) p in simplices X: (n_el, d+1, d)."""
    T = X[:, 1:, :] - X[:, :1, :]  # (n_el, d, d), rows are edge vectors
    rhs = p - X[:, 0, :]
    lam = np.linalg.solve(np.swapaxes(T, 1, 2), rhs[..., None])[..., 0]
    return np.column_stack([1.0 - lam.sum(axis=1), lam])


def _contains(mesh, pts, tol):
    b = _simplex_block(mesh)
    X = mesh.coords[b.conn]
    out = np.zeros(len(pts), dtype=bool)
    for k, p in enumerate(pts):
        lam = _barycentric(X, p)
        out[k] = np.any(np.all(lam >= -tol, axis=1))
    return out


def locate_points(mesh: Mesh, points, tol=1e-10) -> PointEmbedding:
    """Containing simplex and barycentric coordinates for each point.

    Brute force over all elements; on shared faces the lowest element id wins.
    """
    b = _simplex_block(mesh)
    X = mesh.coords[b.conn]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != mesh.dim:
        raise DimensionMismatch("point dimension does not match mesh")
    ids = np.empty(len(pts), dtype=np.int64)
    bary = np.empty((len(pts), mesh.dim + 1))
    for k, p in enumerate(pts):
        lam = _barycentric(X, p)
        inside = np.flatnonzero(np.all(lam >= -tol, axis=1))
        if inside.size == 0:
            raise PointOutsideMesh(f"point {p.tolist()} is outside the mesh")
        e = inside[0]
        ids[k] = e
        bary[k] = lam[e]
    return PointEmbedding(ids, bary, b.kind)


def paired_nodes(mesh: Mesh, translation, tol=None):
    """(master, slave) node pairs with x_slave = x_master + translation.

    Candidates are boundary nodes whose translate lies inside the closed
    domain; each must find a boundary partner within ``tol``.
    """
    t = np.asarray(translation, dtype=float)
    if t.shape != (mesh.dim,):
        raise DimensionMismatch("translation must have one entry per axis")
    tol = mesh.default_tol() if tol is None else tol
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    bnd = all_boundary_nodes(mesh).indices
    xb = mesh.coords[bnd]
    moved = xb + t
    cand = _contains(mesh, moved, max(tol / max(mesh.bbox_diagonal(), 1e-300), 1e-12))
    tree = cKDTree(xb)
    dist, idx = tree.query(moved[cand], distance_upper_bound=tol)
    masters = bnd[cand]
    if np.any(~np.isfinite(dist)):
        bad = masters[~np.isfinite(dist)]
        raise UnmatchedNode(f"{len(bad)} node(s) without partner, e.g. node {int(bad[0])}")
    slaves = bnd[idx]
    if len(np.unique(slaves)) != len(slaves):
        raise UnmatchedNode("pairing is not one-to-one; reduce tol")
    return [(int(m), int(s)) for m, s in zip(masters, slaves)]
