"""Fibers embedded in a bulk mesh through barycentric interpolation."""

from __future__ import annotations

import numpy as np

from ..ad import ops as anp
from ..mesh import Mesh, PointEmbedding, locate_points
from ..operator import Operator


class EmbeddedFibers:
    """Line2 fibers whose nodes are tied to the containing bulk elements."""

    def __init__(self, bulk: Mesh, fiber_mesh: Mesh, EA: float):
        self.bulk = bulk
        self.fiber_mesh = fiber_mesh
        self.EA = float(EA)
        self.embedding: PointEmbedding = locate_points(bulk, fiber_mesh.coords)
        self.op = Operator(fiber_mesh, "Line2", m=bulk.dim, batch_size=10**9)
        X = fiber_mesh.coords[self.op.conn]
        t = X[:, 1] - X[:, 0]
        self.tangent = t / np.linalg.norm(t, axis=1, keepdims=True)

    def fiber_displacements(self, u_bulk):
        un = anp.reshape(u_bulk, (self.bulk.n_nodes, self.bulk.dim))
        return self.embedding.interpolate(self.bulk, un)

    def axial_strain(self, u_bulk):
        """ε = t·(∇_s u)·t at the fiber quadrature points."""
        uf = self.fiber_displacements(u_bulk)
        G = self.op.grad(uf)  # (n_el, n_q, m, d)
        Gt = anp.einsum("eqmk,ek->eqm", G, self.tangent)
        return anp.einsum("eqm,em->eq", Gt, self.tangent)

    def energy(self, u_bulk):
        eps = self.axial_strain(u_bulk)
        return self.op.integrate(0.5 * self.EA * eps * eps)


def fiber_energy(u_bulk, embedding: EmbeddedFibers):
    """Ψ_fiber = ∫ ½ EA ε² ds, with fiber kinematics taken from the bulk."""
    return embedding.energy(u_bulk)
