"""Plate with a circular hole under uniaxial tension, compared with the
Kirsch solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..coloring import distance2_coloring, restrict_pattern, sparsity_from_mesh
from ..mesh import Plane, boundary_edge_mesh, boundary_nodes
from ..meshgen import plate_with_hole
from ..operator import Operator
from ..physics.elasticity import (
    ElasticParams,
    cauchy_small_strain,
    elastic_energy,
    kirsch_reference,
    traction_potential,
)
from ..solver import fixed_dofs, newton_assembled, reduced_functional
from .common import Result, nodal_average


@dataclass
class KirschConfig:
    R: float = 0.05
    half_width: float = 0.5
    traction: float = 0.01
    E: float = 1.0
    nu: float = 0.3
    n_theta: int = 60
    n_r: int = 100
    grading: float = 2.0
    # radial window for the σ_rr error along θ = 0
    r_max_factor: float = 4.0
    n_samples: int = 200


def solve_plate(cfg: KirschConfig, n_theta, n_r):
    mesh = plate_with_hole(cfg.R, cfg.half_width, n_theta, n_r, cfg.grading)
    params = ElasticParams.from_E_nu(cfg.E, cfg.nu)
    op = Operator(mesh, m=2)
    n = mesh.n_nodes * 2
    right = boundary_nodes(mesh, Plane(0, cfg.half_width))
    op_t = Operator(boundary_edge_mesh(mesh, right), "Line2", m=2)
    psi = elastic_energy(op, params)
    t = np.array([cfg.traction, 0.0])

    def total(u):
        return psi(u) + traction_potential(op_t, u, t)

    left = boundary_nodes(mesh, Plane(0, 0.0))
    pin = int(np.argmin(np.linalg.norm(mesh.coords - [cfg.R, 0.0], axis=1)))
    dofs = np.concatenate([fixed_dofs(left, 0, 2), [2 * pin + 1]])
    red = reduced_functional(total, n, (dofs, 0.0))

    pattern = restrict_pattern(sparsity_from_mesh(mesh, 2), red.free_dofs)
    coloring = distance2_coloring(pattern)
    # quadratic functional: a single Newton step from zero is exact
    u_free, report = newton_assembled(red, np.zeros(red.n_free), pattern, coloring)
    u = np.asarray(red.lift(u_free))
    G = np.asarray(op.grad(u))[:, 0]  # (n_el, 2, 2), one quadrature point
    sig = cauchy_small_strain(G, params)
    sig_nodes = nodal_average(op, sig.reshape(-1, 4)).reshape(-1, 2, 2)
    return mesh, op, u, sig, sig_nodes


def sigma_rr_error(cfg, mesh, sig_nodes):
    """Relative L2 error of the recovered σ_rr along θ = 0 (nodes on y = 0)."""
    on_axis = np.flatnonzero(
        (np.abs(mesh.coords[:, 1]) < 1e-12)
        & (mesh.coords[:, 0] <= cfg.r_max_factor * cfg.R + 1e-12)
    )
    x = mesh.coords[on_axis, 0]
    order = np.argsort(x)
    x = x[order]
    srr_h = sig_nodes[on_axis[order], 0, 0]
    srr, _, _ = kirsch_reference(x, 0.0, cfg.R, cfg.traction)
    # trapezoidal L2 norms along the line
    err = np.sqrt(np.trapezoid((srr_h - srr) ** 2, x))
    ref = np.sqrt(np.trapezoid(srr**2, x) + np.trapezoid(np.full_like(x, cfg.traction) ** 2, x))
    return err / ref


def run(cfg: KirschConfig | None = None) -> Result:
    cfg = cfg or KirschConfig()
    res = Result("kirsch")
    mesh_c, _, _, _, sig_c = solve_plate(cfg, cfg.n_theta // 2, cfg.n_r // 2)
    mesh, op, u, sig, sig_nodes = solve_plate(cfg, cfg.n_theta, cfg.n_r)
    top = int(np.argmin(np.linalg.norm(mesh.coords - [0.0, cfg.R], axis=1)))
    hoop = sig_nodes[top, 0, 0]  # σ_θθ = σ_xx at θ = 90°
    ratio = hoop / (3.0 * cfg.traction)
    res.add("hoop stress / 3t at theta=90deg", ratio, "1 ± 0.05", abs(ratio - 1) <= 0.05)
    e_c = sigma_rr_error(cfg, mesh_c, sig_c)
    e_f = sigma_rr_error(cfg, mesh, sig_nodes)
    res.add("sigma_rr L2 error ratio fine/coarse", e_f / e_c, "< 1", e_f < e_c)
    res.data.update(
        n_dofs=2 * mesh.n_nodes, hoop=hoop, err_coarse=e_c, err_fine=e_f, n_dofs_coarse=2 * mesh_c.n_nodes
    )
    res.data["mesh"] = mesh
    res.data["u"] = u
    return res
