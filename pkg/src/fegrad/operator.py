"""Gather, evaluate, reduce: fields and energies over a mesh block.

Geometry (basis gradients and weighted measures) is precomputed once in
plain floats and treated as a constant. Field arguments may be arrays,
Duals or tape variables.

``Operator.energy`` is the batched path: each batch gets its own short
tape which is swept and released before the next batch starts, so the
recorded length stays proportional to the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import element as el
from .ad import ops as anp
from .ad.core import Dual, Tape, Var, _record, primal
from .errors import NonFiniteValue, ShapeMismatch
from .mesh import Mesh

DEFAULT_BATCH = 50_000


@dataclass
class BatchView:
    """What a density sees for one batch of elements."""

    op: "Operator"
    elements: slice
    data: dict = field(default_factory=dict)

    @property
    def ids(self):
        return np.arange(self.elements.start, self.elements.stop)

    @property
    def dNdx(self):
        return self.op.dNdx[self.elements]

    @property
    def wdetJ(self):
        return self.op.wdetJ[self.elements]

    @property
    def x_q(self):
        return self.op.x_q[self.elements]

    def eval(self, ue):
        """Quadrature values (nb, n_q, m) from gathered nodal values (nb, n_en, m)."""
        return anp.einsum("qa,eam->eqm", self.op.N, ue)

    def grad(self, ue):
        """Quadrature gradients (nb, n_q, m, d)."""
        return anp.einsum("eam,eqak->eqmk", ue, self.dNdx)


class Operator:
    """Precomputed element geometry for one block of a mesh.

    Parameters
    ----------
    mesh : Mesh
    kind : element kind or tag; defaults to the first block's kind
    m : DoFs per node (only used for shape checks and pattern helpers)
    batch_size : elements per batch for ``energy``
    rule : optional QuadRule replacing the default for the element kind
    """

    def __init__(self, mesh: Mesh, kind=None, m=1, batch_size=DEFAULT_BATCH, rule=None):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.mesh = mesh
        block = mesh.block(kind)
        self.kind = mesh.element_kind(block)
        self.conn = block.conn
        self.m = int(m)
        self.batch_size = int(batch_size)
        self.rule = rule if rule is not None else el.reference_rule(self.kind)

        xi = self.rule.points
        self.N = np.asarray(el.shape_functions(self.kind, xi))  # (n_q, n_en)
        X = mesh.coords[self.conn]  # (n_el, n_en, d)
        Xq = X[:, None]  # broadcast over quadrature points
        xi_b = np.broadcast_to(xi, (1,) + xi.shape)
        dNdx, detJ = el.basis_gradients(self.kind, xi_b, Xq)
        self.dNdx = np.ascontiguousarray(dNdx)  # (n_el, n_q, n_en, d)
        self.detJ = np.asarray(detJ)
        self.wdetJ = np.ascontiguousarray(self.rule.weights[None, :] * self.detJ)
        self.x_q = np.einsum("qa,ead->eqd", self.N, X)

    # -- sizes ---------------------------------------------------------------
    @property
    def n_elements(self):
        return len(self.conn)

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    @property
    def n_q(self):
        return self.rule.n_q

    @property
    def n_en(self):
        return self.kind.n_en

    @property
    def dim(self):
        return self.mesh.dim

    def batches(self, batch_size=None):
        bs = self.batch_size if batch_size is None else int(batch_size)
        n = self.n_elements
        return [slice(s, min(s + bs, n)) for s in range(0, n, bs)]

    # -- field helpers ---------------------------------------------------------
    def _nodal(self, u, m=None):
        s = anp.shape(u)
        size = int(np.prod(s))
        if m is None:
            if size % self.n_nodes:
                raise ShapeMismatch(f"field of size {size} does not fit {self.n_nodes} nodes")
            m = size // self.n_nodes
        if size != self.n_nodes * m:
            raise ShapeMismatch(f"field of shape {s} does not match {self.n_nodes} x {m}")
        if s != (self.n_nodes, m):
            u = anp.reshape(u, (self.n_nodes, m))
        return u

    def gather(self, u, elements=slice(None)):
        """Element-local nodal values (n_el, n_en, m)."""
        u = self._nodal(u)
        return anp.getitem(u, self.conn[elements])

    def eval(self, u):
        """Interpolated values at quadrature points, (N_el, N_q, m)."""
        ue = self.gather(u)
        return anp.einsum("qa,eam->eqm", self.N, ue)

    def grad(self, u):
        """Field gradients at quadrature points, (N_el, N_q, m, d)."""
        ue = self.gather(u)
        return anp.einsum("eam,eqak->eqmk", ue, self.dNdx)

    def integrate(self, density):
        """Σ_e Σ_q density·w·detJ with a batch-independent reduction order.

        Element totals are formed batch by batch in ascending element order
        and summed once at the end, so the result does not depend on the
        batch size.
        """
        s = anp.shape(density)
        if s != (self.n_elements, self.n_q):
            raise ShapeMismatch(f"density shape {s} != {(self.n_elements, self.n_q)}")
        parts = []
        for b in self.batches():
            d = anp.getitem(density, b) if len(self.batches()) > 1 else density
            parts.append(anp.einsum("eq,eq->e", d, self.wdetJ[b]))
        per_el = parts[0] if len(parts) == 1 else anp.concatenate(parts)
        total = anp.sum(per_el)
        if not np.isfinite(primal(total)):
            raise NonFiniteValue("non-finite integral")
        return total

    # -- batched energy -----------------------------------------------------
    def element_energies(self, density, *fields, data=None, batch_size=None):
        """Per-element energies (N_el,) without differentiation."""
        data = data or {}
        nodal = [self._nodal(primal(f) if not isinstance(f, Dual) else f) for f in fields]
        out = []
        for b in self.batches(batch_size):
            view = BatchView(self, b, {k: v[b] for k, v in data.items()})
            ues = [anp.getitem(f, self.conn[b]) for f in nodal]
            psi = density(view, *ues)
            out.append(anp.einsum("eq,eq->e", psi, view.wdetJ))
        return anp.concatenate(out) if len(out) > 1 else out[0]

    def energy(self, density, *fields, data=None, batch_size=None):
        """Σ_batches Σ_e Σ_q density(view, *u_e)·w·detJ.

        ``density(view, *ue)`` receives a BatchView and each field gathered
        to (nb, n_en, m_f); it returns (nb, n_q). ``data`` holds per-element
        arrays (leading axis N_el) that are sliced to the batch.

        Fields that are tape variables are differentiated batch by batch:
        each batch is recorded on a private tape, swept, and released, and
        only the accumulated gradient is attached to the caller's tape.
        """
        data = data or {}
        is_var = [isinstance(f, Var) for f in fields]
        if not any(is_var):
            nodal = [self._nodal(f) for f in fields]
            total = anp.sum(self.element_energies(density, *nodal, data=data, batch_size=batch_size))
            if not np.isfinite(primal(total)):
                raise NonFiniteValue("non-finite energy")
            return total

        # reshape the raw values so that the caller's tape gets one node only
        raw = [self._nodal(f.value if v else f) for f, v in zip(fields, is_var)]
        grads = [_zeros_acc(r) if v else None for r, v in zip(raw, is_var)]
        per_el = []
        for b in self.batches(batch_size):
            view = BatchView(self, b, {k: v[b] for k, v in data.items()})
            idx = self.conn[b]
            with Tape() as tape:
                ues, leaves = [], []
                for r, v in zip(raw, is_var):
                    ue = anp.getitem(r, idx)
                    if v:
                        ue = tape.leaf(ue)
                        leaves.append(ue)
                    ues.append(ue)
                psi = density(view, *ues)
                e = anp.einsum("eq,eq->e", psi, view.wdetJ)
                if isinstance(e, Var):
                    gs = tape.gradient(anp.sum(e), leaves)
                    per_el.append(e.value)
                else:
                    gs = [None] * len(leaves)
                    per_el.append(e)
            k = 0
            for i, v in enumerate(is_var):
                if v:
                    if gs[k] is not None:
                        _scatter_inplace(grads[i], idx, gs[k])
                    k += 1
        per_el = anp.concatenate(per_el) if len(per_el) > 1 else per_el[0]
        total = anp.sum(per_el)
        if not np.isfinite(primal(total)):
            raise NonFiniteValue("non-finite energy")
        pairs = [
            (f, (lambda g, G=G, s=anp.shape(f): anp.reshape(anp.multiply(g, _as_carrier(G)), s)))
            for f, v, G in zip(fields, is_var, grads)
            if v
        ]
        return _record(total, pairs)


def _zeros_acc(r):
    if isinstance(r, Dual):
        return [np.zeros(r.shape), np.zeros(r.shape)]
    return [np.zeros(np.shape(r))]


def _scatter_inplace(acc, idx, g):
    if isinstance(g, Dual):
        np.add.at(acc[0], idx, g.value)
        if len(acc) == 1:
            acc.append(np.zeros_like(acc[0]))
        np.add.at(acc[1], idx, g.tangent)
    else:
        np.add.at(acc[0], idx, g)


def _as_carrier(acc):
    return acc[0] if len(acc) == 1 else Dual(acc[0], acc[1])


def new_operator(mesh: Mesh, kind=None, m=1, batch_size=DEFAULT_BATCH) -> Operator:
    return Operator(mesh, kind, m, batch_size)
