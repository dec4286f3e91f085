"""Exponential cohesive law with irreversible linear unloading.

Loading:    ψ(δ) = Γ[1 − (1 + δ/δc) exp(−δ/δc)],  T(δ) = Γ/δc² · δ exp(−δ/δc)
Unloading:  ψ(δ) = ψ(δm) − ½(δm − δ)(Tm + Tm δ/δm)   (δ < δm)

The unloading form is the integral of the secant traction Tm·δ/δm, i.e.
linear unloading to the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad import ops as anp
from ..ad.core import primal
from ..element import LINE2, QuadRule
from ..mesh import Block, Mesh
from ..operator import Operator

OPENING_EPS = 1e-8


@dataclass(frozen=True)
class CohesiveParams:
    Gamma: float
    sigma_c: float
    kappa_pen: float = 0.0

    def __post_init__(self):
        if self.Gamma <= 0 or self.sigma_c <= 0 or self.kappa_pen < 0:
            raise ValueError("Gamma and sigma_c must be positive, kappa_pen non-negative")

    @property
    def delta_c(self):
        return self.Gamma * np.exp(-1.0) / self.sigma_c


def loading_potential(delta, p: CohesiveParams):
    x = delta / p.delta_c
    return p.Gamma * (1.0 - (1.0 + x) * anp.exp(-x))


def loading_traction(delta, p: CohesiveParams):
    dc = p.delta_c
    return p.Gamma / dc**2 * delta * anp.exp(-delta / dc)


def _effective_opening(jump, normal):
    """Opening vector with the closing normal part removed, and that part."""
    if normal is None:
        return jump, None
    dn = anp.einsum("...k,...k->...", jump, normal)
    closing = anp.minimum(dn, 0.0)
    opening = jump - closing[..., None] * normal
    return opening, closing


def cohesive_density(jump, delta_max, params: CohesiveParams, normal=None):
    """Energy per unit interface area for displacement jumps (..., d).

    ``delta_max`` is the frozen history value at each point. With a
    ``normal``, a negative normal jump is penalised by ½κ δn² and does not
    count towards the opening.
    """
    opening, closing = _effective_opening(jump, normal)
    d2 = anp.sum(opening * opening, axis=-1)
    delta = anp.safe_sqrt(d2, 1e-30)
    dm = np.asarray(delta_max, dtype=float)
    dc = params.delta_c

    small = primal(delta) < OPENING_EPS
    # Taylor branch avoids the derivative of sqrt at the origin
    psi_small = params.Gamma * d2 / (2.0 * dc**2)
    psi_load = anp.where(small, psi_small, loading_potential(delta, params))

    dm_safe = np.where(dm > 0, dm, 1.0)
    psi_m = loading_potential(dm, params)
    T_m = loading_traction(dm, params)
    # ψ(δm) − ½(δm − δ)(Tm + Tm δ/δm), expanded with δ² to stay smooth
    psi_unload = psi_m - 0.5 * T_m * dm_safe + 0.5 * T_m / dm_safe * d2

    unloading = (primal(delta) < dm) & (dm > 0)
    psi = anp.where(unloading, psi_unload, psi_load)
    if closing is not None and params.kappa_pen > 0:
        psi = psi + 0.5 * params.kappa_pen * closing * closing
    return psi


def effective_traction(delta, delta_max, params: CohesiveParams):
    """Scalar traction dψ/dδ for plain arrays (loading or secant unloading)."""
    delta = np.asarray(delta, dtype=float)
    dm = np.asarray(delta_max, dtype=float)
    Tl = loading_traction(delta, params)
    Tu = loading_traction(dm, params) * delta / np.where(dm > 0, dm, 1.0)
    return np.where((delta < dm) & (dm > 0), Tu, Tl)


def update_history(delta, delta_max):
    """δm' = max(δm, δ) pointwise; call only between converged steps."""
    return np.maximum(np.asarray(delta_max, dtype=float), np.asarray(delta, dtype=float))


class InterfaceOperator:
    """Zero-thickness interface between paired node lists.

    ``minus`` and ``plus`` are Line2 (2D) connectivities with coincident
    geometry; the jump is u⁺ − u⁻ at the quadrature points.
    """

    def __init__(self, coords, minus, plus, n_q=2):
        self.coords = np.asarray(coords, dtype=float)
        dim = self.coords.shape[1]
        mesh_m = Mesh(dim, self.coords, (Block("Line2", minus),))
        g = 1.0 / np.sqrt(3.0)
        rule = QuadRule(np.array([[-g], [g]]), np.ones(2)) if n_q == 2 else None
        self.op = Operator(mesh_m, LINE2, m=dim, batch_size=10**9, rule=rule)
        self.minus = np.asarray(minus)
        self.plus = np.asarray(plus)
        X = self.coords[self.minus]
        t = X[:, 1] - X[:, 0]
        t = t / np.linalg.norm(t, axis=1, keepdims=True)
        # normal rotated +90° from the minus-side tangent
        self.normal = np.stack([-t[:, 1], t[:, 0]], axis=1)
        self.tangent = t

    @property
    def n_q(self):
        return self.op.n_q

    @property
    def area(self):
        return float(self.op.wdetJ.sum())

    def jump(self, u):
        """(N_el, N_q, d) jump at quadrature points, any scalar type."""
        dim = self.coords.shape[1]
        un = anp.reshape(u, (len(self.coords), dim)) if anp.shape(u) != (len(self.coords), dim) else u
        up = anp.getitem(un, self.plus)
        um = anp.getitem(un, self.minus)
        return anp.einsum("qa,eam->eqm", self.op.N, up - um)

    def energy(self, u, delta_max, params: CohesiveParams):
        J = self.jump(u)
        n = self.normal[:, None, :]
        return self.op.integrate(cohesive_density(J, delta_max, params, normal=n))

    def opening(self, u):
        J = primal(self.jump(u))
        dn = np.einsum("eqk,ek->eq", J, self.normal)
        opening = J - np.minimum(dn, 0.0)[..., None] * self.normal[:, None, :]
        return np.linalg.norm(opening, axis=-1)
