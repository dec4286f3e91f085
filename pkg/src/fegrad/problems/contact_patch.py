"""Two elastic blocks with non-matching meshes pressed together.

The lower block is clamped at its base and the upper block is pushed down
at its top. Node-to-segment penalty contact couples the two surfaces. The
matrix-free Newton-GMRES solution is compared with the assembled one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad import ops as anp
from ..ad.api import grad_scalar
from ..coloring import distance2_coloring, pattern_from_entries, restrict_pattern, sparsity_from_mesh
from ..mesh import Block, Mesh, structured_grid
from ..operator import Operator
from ..physics.contact import ContactSurface, penalty_contact_energy
from ..physics.elasticity import ElasticParams, elastic_energy
from ..solver import NewtonOptions, fixed_dofs, newton_assembled, newton_matrix_free, reduced_functional
from .common import Result


@dataclass
class ContactConfig:
    nx_lower: int = 8
    nx_upper: int = 11
    ny: int = 4
    E: float = 1.0
    nu: float = 0.3
    kappa: float = 100.0
    push: float = 0.01


def build(cfg: ContactConfig):
    lo = structured_grid(cfg.nx_lower, cfg.ny, extent=((0, 1), (0, 0.5)), kind="Tri3")
    hi = structured_grid(cfg.nx_upper, cfg.ny, extent=((0, 1), (0.5, 1)), kind="Tri3")
    coords = np.vstack([lo.coords, hi.coords])
    conn = np.vstack([lo.blocks[0].conn, hi.blocks[0].conn + lo.n_nodes])
    mesh = Mesh(2, coords, (Block("Tri3", conn),))
    n_lo = lo.n_nodes
    top_lo = np.arange(cfg.ny * (cfg.nx_lower + 1), n_lo)
    bot_hi = n_lo + np.arange(cfg.nx_upper + 1)
    # body on the left: the lower top edge runs right to left
    s1 = np.column_stack([top_lo[::-1][:-1], top_lo[::-1][1:]])
    s2 = np.column_stack([bot_hi[:-1], bot_hi[1:]])
    surf1 = ContactSurface.from_segments(s1, coords)
    surf2 = ContactSurface.from_segments(s2, coords)
    base = np.arange(cfg.nx_lower + 1)
    top = n_lo + np.arange(cfg.ny * (cfg.nx_upper + 1), hi.n_nodes)
    return mesh, n_lo, surf1, surf2, base, top


def run(cfg: ContactConfig | None = None) -> Result:
    cfg = cfg or ContactConfig()
    res = Result("contact")
    mesh, n_lo, s1, s2, base, top = build(cfg)
    n = 2 * mesh.n_nodes
    op = Operator(mesh, m=2)
    psi = elastic_energy(op, ElasticParams.from_E_nu(cfg.E, cfg.nu))
    X = mesh.coords

    def contact(u):
        x = X + anp.reshape(u, (-1, 2))
        return penalty_contact_energy(x, x, s1, s2, cfg.kappa)

    def total(u):
        return psi(u) + contact(u)

    dofs = np.concatenate([fixed_dofs(base, [0, 1], 2), fixed_dofs(top, [0, 1], 2)])
    vals = np.concatenate([np.zeros(2 * len(base)), np.tile([0.0, -cfg.push], len(top))])
    red = reduced_functional(total, n, (dofs, vals))

    opts = NewtonOptions(tol_abs=1e-12, tol_rel=0.0, inner="gmres", inner_tol=1e-12)
    u_mf, rep = newton_matrix_free(red, np.zeros(red.n_free), opts)
    # assembled reference: mesh coupling plus a dense block over both surfaces
    sdofs = fixed_dofs(np.concatenate([s1.nodes, s2.nodes]), [0, 1], 2)
    a, b = np.meshgrid(sdofs, sdofs, indexing="ij")
    full = sparsity_from_mesh(mesh, 2)
    pat = pattern_from_entries(
        np.concatenate([full.rows(), a.ravel()]), np.concatenate([full.col_idx, b.ravel()]), n, n
    )
    pat = restrict_pattern(pat, red.free_dofs)
    u_as, _ = newton_assembled(red, np.zeros(red.n_free), pat, distance2_coloring(pat), NewtonOptions(tol_rel=0.0))

    u = np.asarray(red.lift(u_mf))
    fc = grad_scalar(contact, u).reshape(-1, 2)
    F1, F2 = fc[:n_lo].sum(axis=0), fc[n_lo:].sum(axis=0)
    bal = np.abs(F1 + F2).max() / max(np.abs(F1).max(), 1e-300)
    res.add("contact action-reaction |F1 + F2| / |F1|", bal, "< 1e-10", bal < 1e-10)
    # upper body equilibrium: the top reaction is the contact force on it
    r = grad_scalar(total, u).reshape(-1, 2)
    R_top = r[top].sum(axis=0)
    eq = abs(R_top[1] - F2[1]) / abs(F2[1])
    res.add("top reaction vs contact force (rel)", eq, "< 1e-8", eq < 1e-8)
    diff = np.abs(u_mf - u_as).max() / np.abs(u_as).max()
    res.add("matrix-free vs assembled Newton (rel)", diff, "< 1e-8", diff < 1e-8)
    res.add("Newton-GMRES converged", rep.residual_norm, "<= 1e-12", rep.converged)
    res.data.update(contact_force=F1, newton_iterations=rep.iterations, gmres_iterations=rep.inner_iterations)
    return res
