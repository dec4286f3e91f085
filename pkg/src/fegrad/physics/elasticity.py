"""Small-strain and neo-Hookean densities, traction loads and the Kirsch
closed-form solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad import ops as anp
from ..ad.core import primal
from ..errors import DomainError, InvertedElement


@dataclass(frozen=True)
class ElasticParams:
    lmbda: float
    mu: float

    def __post_init__(self):
        if np.any(np.asarray(self.mu) <= 0):
            raise ValueError("mu must be positive")
        # bulk modulus positive in 3D, which also covers 2D
        if np.any(np.asarray(self.lmbda) + 2.0 * np.asarray(self.mu) / 3.0 <= 0):
            raise ValueError("lmbda + 2 mu / 3 must be positive")

    @classmethod
    def from_E_nu(cls, E, nu):
        """Lamé parameters; in 2D these give the plane-strain law."""
        lmbda = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        return cls(lmbda, mu)

    def plane_strain_matrix(self):
        lm, mu = self.lmbda, self.mu
        return np.array([[lm + 2 * mu, lm, 0.0], [lm, lm + 2 * mu, 0.0], [0.0, 0.0, mu]])


def strain(grad_u):
    return 0.5 * (grad_u + anp.swapaxes(grad_u, -1, -2))


def linear_elastic_density(grad_u, params: ElasticParams):
    """ψ = μ ε:ε + ½λ (tr ε)², with ε = sym ∇u. ``grad_u``: (..., d, d)."""
    eps = strain(grad_u)
    tr = anp.trace(eps)
    return params.mu * anp.sum(eps * eps, axis=(-2, -1)) + 0.5 * params.lmbda * tr * tr


def _identity_like(grad_u):
    d = anp.shape(grad_u)[-1]
    return np.eye(d)


def neo_hookean_density(grad_u, params: ElasticParams):
    """ψ = μ/2 (I₁ − d − 2 ln J) + λ/2 (ln J)², F = I + ∇u."""
    d = anp.shape(grad_u)[-1]
    F = grad_u + _identity_like(grad_u)
    J = anp.det(F)
    if np.any(primal(J) <= 0.0):
        raise InvertedElement(f"det F <= 0 at {int(np.sum(primal(J) <= 0.0))} point(s)")
    I1 = anp.sum(F * F, axis=(-2, -1))
    lnJ = anp.log(J)
    return 0.5 * params.mu * (I1 - d - 2.0 * lnJ) + 0.5 * params.lmbda * lnJ * lnJ


def elastic_density(law, params):
    """Adapt a ∇u density to the Operator.energy calling convention."""

    def density(view, ue):
        G = view.grad(ue)
        return law(G, params)

    return density


def elastic_energy(op, params, law=linear_elastic_density):
    """Ψ(u) = ∫ ψ(∇u) dΩ as a ScalarFunctional on the flat DoF vector."""
    density = elastic_density(law, params)
    return lambda u: op.energy(density, u)


def phase_elastic_energy(op, phase, params_list, law=linear_elastic_density):
    """Ψ for a multi-phase body; ``phase`` holds a material id per element."""
    lm = np.array([p.lmbda for p in params_list])[phase]
    mu = np.array([p.mu for p in params_list])[phase]

    def density(view, ue):
        G = view.grad(ue)
        # per-element parameters broadcast over quadrature points
        p = ElasticParams(view.data["lmbda"][:, None], view.data["mu"][:, None])
        return law(G, p)

    data = {"lmbda": lm, "mu": mu}
    return lambda u: op.energy(density, u, data=data)


def traction_potential(op_boundary, u, t):
    """−∫ t·u dΓ over the elements of ``op_boundary``."""
    t = np.asarray(t, dtype=float)

    def density(view, ue):
        return -anp.einsum("eqm,m->eq", view.eval(ue), t)

    return op_boundary.energy(density, u)


def kirsch_reference(r, theta, R, t):
    """Stresses (σ_rr, σ_θθ, σ_rθ) around a circular hole in an infinite
    plate under remote uniaxial tension ``t`` along x."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r < R * (1 - 1e-12)):
        raise DomainError("kirsch_reference needs r >= R")
    a2 = (R / r) ** 2
    a4 = a2 * a2
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    srr = 0.5 * t * (1 - a2) + 0.5 * t * (1 - 4 * a2 + 3 * a4) * c2
    stt = 0.5 * t * (1 + a2) - 0.5 * t * (1 + 3 * a4) * c2
    srt = -0.5 * t * (1 + 2 * a2 - 3 * a4) * s2
    return srr, stt, srt


def cauchy_small_strain(grad_u, params: ElasticParams):
    """σ = 2με + λ tr(ε) I for plain arrays (post-processing)."""
    eps = 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))
    d = grad_u.shape[-1]
    return 2 * params.mu * eps + params.lmbda * np.trace(eps, axis1=-2, axis2=-1)[..., None, None] * np.eye(d)
