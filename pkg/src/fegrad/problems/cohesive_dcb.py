"""Cohesive interface in a pre-cracked strip pulled to full separation.

The strip [0, 10L] × [0, 2L] has a zero-thickness interface at mid-height
with no cohesive elements along the first L (pre-crack). The bottom edge is
clamped and the top edge is displaced upwards. The bulk is stiff enough
that the opening is stable under displacement control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad.api import grad_scalar
from ..coloring import distance2_coloring, restrict_pattern, sparsity_from_mesh
from ..mesh import Block, Mesh, Plane, boundary_nodes
from ..meshgen import split_strip
from ..operator import Operator
from ..physics.cohesive import (
    CohesiveParams,
    InterfaceOperator,
    cohesive_density,
    effective_traction,
    loading_potential,
    update_history,
)
from ..physics.elasticity import ElasticParams, elastic_energy
from ..solver import NewtonOptions, fixed_dofs, newton_assembled, newton_matrix_free, reduced_functional
from .common import Result


@dataclass
class DcbConfig:
    L: float = 1.0
    nx: int = 40
    ny_half: int = 4
    E: float = 1.0e3
    nu: float = 0.3
    Gamma: float = 1.0
    sigma_c: float = 2.0
    kappa_pen: float = 1.0e4
    max_opening_factor: float = 25.0
    n_steps: int = 60
    matrix_free_check_step: int = 10


def build(cfg: DcbConfig):
    L = cfg.L
    mesh, lower, upper = split_strip(10 * L, 2 * L, cfg.nx, cfg.ny_half)
    x = mesh.coords[lower, 0]
    seg = np.column_stack([np.arange(len(lower) - 1), np.arange(1, len(lower))])
    keep = x[seg[:, 0]] >= L - 1e-12  # cohesive elements beyond the pre-crack
    minus = lower[seg[keep]]
    plus = upper[seg[keep]]
    iface = InterfaceOperator(mesh.coords, minus, plus)
    # pattern: bulk connectivity plus the four nodes of each interface element
    pat_mesh = Mesh(2, mesh.coords, mesh.blocks + (Block("Quad4", np.column_stack([minus, plus[:, ::-1]])),))
    return mesh, iface, sparsity_from_mesh(pat_mesh, 2)


def run(cfg: DcbConfig | None = None) -> Result:
    cfg = cfg or DcbConfig()
    res = Result("cohesive")
    coh = CohesiveParams(cfg.Gamma, cfg.sigma_c, cfg.kappa_pen)
    mesh, iface, full_pattern = build(cfg)
    n = 2 * mesh.n_nodes
    op = Operator(mesh, m=2)
    psi_bulk = elastic_energy(op, ElasticParams.from_E_nu(cfg.E, cfg.nu))

    # bulk stiffness of two layers in series versus the steepest softening
    k_bulk = cfg.E / (2 * cfg.L)
    k_soft = cfg.Gamma * np.exp(-2.0) / coh.delta_c**2
    res.data["stability_margin"] = k_bulk / k_soft

    bottom = boundary_nodes(mesh, Plane(1, 0.0))
    top = boundary_nodes(mesh, Plane(1, 2 * cfg.L))
    fixed = np.concatenate([fixed_dofs(bottom, [0, 1], 2), fixed_dofs(top, [0, 1], 2)])
    free = np.setdiff1d(np.arange(n), fixed)
    pattern = restrict_pattern(full_pattern, free)
    coloring = distance2_coloring(pattern)

    delta_max = np.zeros((len(iface.minus), iface.n_q))
    A = iface.area
    openings = np.linspace(0.0, cfg.max_opening_factor * coh.delta_c, cfg.n_steps + 1)[1:]
    u = np.zeros(n)
    work = 0.0
    prev_force, prev_disp = 0.0, 0.0
    iters = []
    mf_diff = None
    for k, d in enumerate(openings):
        vals = np.concatenate([np.zeros(2 * len(bottom)), np.tile([0.0, d], len(top))])
        dm = delta_max.copy()

        def total(w, dm=dm):
            return psi_bulk(w) + iface.energy(w, dm, coh)

        red = reduced_functional(total, n, (fixed, vals))
        u_free, rep = newton_assembled(red, u[free], pattern, coloring)
        if k == cfg.matrix_free_check_step:
            u_mf, _ = newton_matrix_free(red, u[free], NewtonOptions(inner="gmres", inner_tol=1e-12))
            mf_diff = np.abs(u_mf - u_free).max()
        iters.append(rep.iterations)
        u = np.asarray(red.lift(u_free))
        # reaction on the top edge: residual of the full functional
        r = grad_scalar(total, u)
        force = r[fixed_dofs(top, 1, 2)].sum()
        work += 0.5 * (force + prev_force) * (d - prev_disp)
        prev_force, prev_disp = force, d
        delta_max = update_history(iface.opening(u), delta_max)

    J = np.asarray(iface.jump(u))
    psi_final = float(iface.op.integrate(cohesive_density(J, delta_max, coh, normal=iface.normal[:, None, :])))
    target = cfg.Gamma * A
    res.add("final cohesive energy / (Gamma*A)", psi_final / target, "1 ± 0.02", abs(psi_final / target - 1) <= 0.02)
    res.add("external work / (Gamma*A)", work / target, "1 ± 0.02", abs(work / target - 1) <= 0.02)

    # unload to half the peak opening and reload at a material point
    dmax = 1.7 * coh.delta_c
    j_peak = np.array([0.0, dmax])
    psi_a = float(cohesive_density(j_peak, dmax, coh))
    T_a = float(effective_traction(dmax, dmax, coh))
    hist = update_history(0.5 * dmax, dmax)  # unloading leaves history unchanged
    psi_b = float(cohesive_density(j_peak, hist, coh))
    T_b = float(grad_scalar(lambda j: cohesive_density(j, hist, coh), j_peak)[1])
    closure = max(abs(psi_b - psi_a), abs(T_b - T_a))
    res.add("unload/reload closure |d(psi,T)|", closure, "<= 1e-12", closure <= 1e-12)
    res.data.update(
        area=A,
        psi_final=psi_final,
        work=work,
        newton_iterations=iters,
        matrix_free_vs_assembled=mf_diff,
        loading_at_peak=float(loading_potential(dmax, coh)),
    )
    return res
