"""Neural couplings: an MLP strain energy and an MLP inclusion operator.

Both use untrained, seeded weights. The first replaces the constitutive law
of a Tet4 cube in uniaxial tension by NN(I₁, J) plus a weak neo-Hookean
base. The second removes a central box from the cube and represents it by
a network acting on the displacements of the cutout surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad import ops as anp
from ..ad.api import dense_hessian
from ..coloring import distance2_coloring, pattern_from_entries, restrict_pattern, sparsity_from_mesh
from ..mesh import Box, Plane, all_boundary_nodes, boundary_nodes, structured_grid
from ..meshgen import remove_elements
from ..operator import Operator
from ..physics.elasticity import ElasticParams, elastic_energy, neo_hookean_density
from ..physics.neural import init_mlp, invariant_base_density, mlp_energy_density, neural_inclusion_energy
from ..solver import NewtonOptions, fixed_dofs, newton_assembled, reduced_functional
from .common import Result


@dataclass
class NeuralConfig:
    n: int = 6
    E: float = 1.0
    nu: float = 0.3
    stretch: float = 0.1
    hidden: int = 16
    seed: int = 7
    mlp_scale: float = 0.05
    base_factor: float = 0.1
    inclusion_scale: float = 0.01
    inclusion_pull: float = 0.05
    max_newton: int = 15


def _newton_opts(cfg):
    return NewtonOptions(tol_abs=1e-12, tol_rel=0.0, max_iter=cfg.max_newton, line_search=True)


def mlp_cube_energy(op, w, params, base_factor):
    mu_b, lm_b = base_factor * params.mu, base_factor * params.lmbda

    def base(I1, J):
        return invariant_base_density(I1, J, mu_b, lm_b)

    def density(view, ue):
        F = view.grad(ue) + np.eye(3)
        J = anp.det(F)
        I1 = anp.sum(F * F, axis=(-2, -1))
        return mlp_energy_density(I1, J, w, base)

    return lambda u: op.energy(density, u)


def tension_bcs(mesh, top_uz):
    """Symmetry planes x = 0, y = 0, z = 0 and prescribed u_z on z = 1."""
    x0 = boundary_nodes(mesh, Plane(0, 0.0))
    y0 = boundary_nodes(mesh, Plane(1, 0.0))
    z0 = boundary_nodes(mesh, Plane(2, 0.0))
    z1 = boundary_nodes(mesh, Plane(2, 1.0))
    dofs = np.concatenate([fixed_dofs(x0, 0, 3), fixed_dofs(y0, 1, 3), fixed_dofs(z0, 2, 3), fixed_dofs(z1, 2, 3)])
    vals = np.concatenate([np.zeros(len(x0) + len(y0) + len(z0)), np.full(len(z1), top_uz)])
    return dofs, vals


def solve_reduced(total, n, bcs, pattern, opts):
    dofs, vals = bcs
    # a DoF may sit on several selectors; keep the first occurrence
    dofs, first = np.unique(dofs, return_index=True)
    red = reduced_functional(total, n, (dofs, vals[first]))
    pat = restrict_pattern(pattern, red.free_dofs)
    u_free, rep = newton_assembled(red, np.zeros(red.n_free), pat, distance2_coloring(pat), opts)
    return np.asarray(red.lift(u_free)), rep


def run_mlp_cube(cfg: NeuralConfig, res: Result):
    mesh = structured_grid(cfg.n, cfg.n, cfg.n, kind="Tet4")
    op = Operator(mesh, m=3)
    w = init_mlp([2, cfg.hidden, cfg.hidden, 1], seed=cfg.seed, output_scale=cfg.mlp_scale)
    params = ElasticParams.from_E_nu(cfg.E, cfg.nu)
    total = mlp_cube_energy(op, w, params, cfg.base_factor)
    u, rep = solve_reduced(total, 3 * mesh.n_nodes, tension_bcs(mesh, cfg.stretch), sparsity_from_mesh(mesh, 3),
                           _newton_opts(cfg))
    ok = rep.converged and rep.residual_norm <= 1e-12 and rep.iterations <= cfg.max_newton
    res.add("MLP-energy Newton iterations (|r| <= 1e-12)", rep.iterations, f"<= {cfg.max_newton}", ok)
    res.data.update(mlp_history=rep.history, mlp_residual=rep.residual_norm)
    return u


def cutout_cube(n):
    full = structured_grid(n, n, n, kind="Tet4")
    cent = full.coords[full.blocks[0].conn].mean(axis=1)
    inside = np.all((cent > 1 / 3) & (cent < 2 / 3), axis=1)
    mesh, _ = remove_elements(full, ~inside)
    surf = all_boundary_nodes(mesh).indices
    box = boundary_nodes(mesh, Box([1 / 3] * 3, [2 / 3] * 3), tol=1e-9)
    iface = np.intersect1d(surf, box.indices)
    return mesh, iface


def inclusion_pattern(mesh, iface_dofs):
    """Mesh coupling plus a dense block over the interface DoFs."""
    base = sparsity_from_mesh(mesh, 3)
    a, b = np.meshgrid(iface_dofs, iface_dofs, indexing="ij")
    rows = np.concatenate([base.rows(), a.ravel()])
    cols = np.concatenate([base.col_idx, b.ravel()])
    n = base.n_rows
    return pattern_from_entries(rows, cols, n, n)


def run_inclusion(cfg: NeuralConfig, res: Result):
    mesh, iface = cutout_cube(cfg.n)
    op = Operator(mesh, m=3)
    n = 3 * mesh.n_nodes
    iface_dofs = fixed_dofs(iface, [0, 1, 2], 3)
    w = init_mlp([len(iface_dofs), cfg.hidden, cfg.hidden, 1], seed=cfg.seed + 1,
                 output_scale=cfg.inclusion_scale)
    psi = elastic_energy(op, ElasticParams.from_E_nu(cfg.E, cfg.nu), law=neo_hookean_density)

    def total(u):
        return psi(u) + neural_inclusion_energy(anp.getitem(u, iface_dofs), w)

    pattern = inclusion_pattern(mesh, iface_dofs)
    # dense oracle at a generic state so that no entry vanishes by accident
    u_probe = 1e-3 * np.random.default_rng(cfg.seed).standard_normal(n)
    H = dense_hessian(total, u_probe)
    mismatch = int(np.sum((H != 0.0) != pattern.to_dense()))
    res.add("inclusion pattern vs dense-oracle nonzeros (mismatches)", mismatch, "0", mismatch == 0)

    u, rep = solve_reduced(total, n, tension_bcs(mesh, cfg.inclusion_pull), pattern, _newton_opts(cfg))
    ok = rep.converged and rep.residual_norm <= 1e-12 and rep.iterations <= cfg.max_newton
    res.add("inclusion Newton iterations (|r| <= 1e-12)", rep.iterations, f"<= {cfg.max_newton}", ok)
    res.data.update(
        inclusion_history=rep.history,
        n_interface_dofs=len(iface_dofs),
        inclusion_n_dofs=n,
        inclusion_nnz=pattern.nnz,
    )
    return u


def run(cfg: NeuralConfig | None = None) -> Result:
    cfg = cfg or NeuralConfig()
    res = Result("neural")
    run_mlp_cube(cfg, res)
    run_inclusion(cfg, res)
    return res
