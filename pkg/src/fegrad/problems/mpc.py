"""Hyperelastic plate with a rigid disk inclusion (multi-point constraint).

The hole boundary nodes follow the rigid motion (u_x, u_y, θ) of the disk.
The plate is clamped on the left, u_x of the disk is prescribed and (u_y, θ)
are unknowns next to the free plate DoFs. The Hessian pattern in the reduced
space is Pᵀ A P with P the boolean dependence of full DoFs on unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..ad import ops as anp
from ..ad.api import grad_scalar
from ..coloring import SparsityPattern, distance2_coloring, pattern_from_entries, sparsity_from_mesh
from ..mesh import Plane, boundary_nodes, structured_grid
from ..meshgen import remove_elements
from ..operator import Operator
from ..physics.constraints import rigid_body_lift, rotation_matrix
from ..physics.elasticity import ElasticParams, elastic_energy, neo_hookean_density
from ..solver import NewtonOptions, fixed_dofs, newton_assembled
from .common import Result


@dataclass
class MpcConfig:
    n: int = 32
    center: tuple = (0.65, 0.55)
    radius: float = 0.15
    E: float = 1.0
    nu: float = 0.3
    disk_ux: float = 0.08
    n_steps: int = 8


def build(cfg: MpcConfig):
    full = structured_grid(cfg.n, cfg.n, kind="Tri3")
    cent = full.coords[full.blocks[0].conn].mean(axis=1)
    inside = np.linalg.norm(cent - np.asarray(cfg.center), axis=1) < cfg.radius
    mesh, new_ids = remove_elements(full, ~inside)
    # disk nodes: surviving nodes that belonged to a removed element
    touched = np.unique(full.blocks[0].conn[inside])
    disk = np.sort(new_ids[touched][new_ids[touched] >= 0])
    return mesh, disk


def dependence_pattern(pattern: SparsityPattern, P: sp.csr_matrix) -> SparsityPattern:
    """Structure of Pᵀ A P for a boolean map P (full DoFs × unknowns)."""
    A = sp.csr_matrix(
        (np.ones(pattern.nnz), pattern.col_idx, pattern.row_ptr), shape=(pattern.n_rows, pattern.n_cols)
    )
    Z = (P.T @ A @ P).tocoo()
    return pattern_from_entries(Z.row, Z.col, P.shape[1], P.shape[1])


class RigidDiskPlate:
    def __init__(self, cfg: MpcConfig):
        self.cfg = cfg
        self.ux = cfg.disk_ux
        self.mesh, self.disk = build(cfg)
        mesh = self.mesh
        self.n = 2 * mesh.n_nodes
        self.op = Operator(mesh, m=2)
        self.params = ElasticParams.from_E_nu(cfg.E, cfg.nu)
        self.psi = elastic_energy(self.op, self.params, law=neo_hookean_density)
        left = boundary_nodes(mesh, Plane(0, 0.0))
        taken = np.concatenate([fixed_dofs(left, [0, 1], 2), fixed_dofs(self.disk, [0, 1], 2)])
        self.free = np.setdiff1d(np.arange(self.n), taken)
        self.nf = len(self.free)
        # unknowns: free plate DoFs, then (u_y, θ) of the disk
        rows = [self.free, 2 * self.disk, 2 * self.disk + 1, 2 * self.disk + 1]
        cols = [np.arange(self.nf), np.full(len(self.disk), self.nf + 1),
                np.full(len(self.disk), self.nf), np.full(len(self.disk), self.nf + 1)]
        P = sp.csr_matrix(
            (np.ones(sum(len(r) for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.nf + 2),
        )
        self.pattern = dependence_pattern(sparsity_from_mesh(mesh, 2), P)
        self.coloring = distance2_coloring(self.pattern)

    def rigid(self, z):
        return anp.concatenate([np.array([self.ux]), anp.getitem(z, slice(self.nf, None))])

    def full(self, z):
        u = anp.index_set(np.zeros(self.n), self.free, anp.getitem(z, slice(0, self.nf)))
        return rigid_body_lift(u, self.rigid(z), self.cfg.center, self.disk, self.mesh.coords)

    def energy(self, z):
        return self.psi(self.full(z))

    def solve(self, opts: NewtonOptions | None = None):
        """Ramp the prescribed u_x so that no step inverts an element."""
        opts = opts or NewtonOptions(line_search=True, tol_rel=0.0)
        z = np.zeros(self.nf + 2)
        iters = []
        for ux in np.linspace(0.0, self.cfg.disk_ux, self.cfg.n_steps + 1)[1:]:
            self.ux = ux
            z, rep = newton_assembled(self.energy, z, self.pattern, self.coloring, opts)
            iters.append(rep.iterations)
        return z, rep, iters


def disk_moment(plate: RigidDiskPlate, z):
    """Σ (R v_i) × f_i over disk nodes, with f the full-space residual."""
    u = np.asarray(plate.full(z))
    f = grad_scalar(plate.psi, u).reshape(-1, 2)[plate.disk]
    v = plate.mesh.coords[plate.disk] - np.asarray(plate.cfg.center)
    Rv = v @ np.asarray(rotation_matrix(z[-1])).T
    return float(np.sum(Rv[:, 0] * f[:, 1] - Rv[:, 1] * f[:, 0]))


def run(cfg: MpcConfig | None = None) -> Result:
    cfg = cfg or MpcConfig()
    res = Result("mpc")
    plate = RigidDiskPlate(cfg)
    z, rep, iters = plate.solve()
    u = np.asarray(plate.full(z)).reshape(-1, 2)
    X = plate.mesh.coords[plate.disk]
    x = X + u[plate.disk]
    d0 = np.linalg.norm(X[:, None] - X[None], axis=2)
    d1 = np.linalg.norm(x[:, None] - x[None], axis=2)
    dist_err = np.abs(d1 - d0).max()
    M = disk_moment(plate, z)
    res.add("disk pairwise distance change", dist_err, "<= 1e-10", dist_err <= 1e-10)
    res.add("moment about disk center", abs(M), "< 1e-8", abs(M) < 1e-8)
    res.add("Newton converged", rep.residual_norm, "<= 1e-12", rep.converged)
    res.data.update(
        theta=float(z[-1]),
        u_y=float(z[-2]),
        iterations=iters,
        history=rep.history,
        n_disk_nodes=len(plate.disk),
        n_unknowns=plate.nf + 2,
        n_colors=plate.coloring.n_colors,
    )
    return res
