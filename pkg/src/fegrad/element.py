"""Linear reference elements, quadrature rules and reference-to-physical maps.

Everything here accepts plain arrays, ``Dual`` or ``Var`` inputs and allows
leading batch axes: ``nodal_coords`` of shape (..., n_en, d_phys) gives a
Jacobian of shape (..., d_ref, d_phys).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ad import ops as anp
from .ad.core import primal
from .errors import DegenerateElement, UnsupportedElement


@dataclass(frozen=True)
class ElementKind:
    tag: str
    n_en: int
    d_ref: int
    # None: taken from the nodal coordinates (Line2 in 2D or 3D)
    d_phys: int | None = None


LINE2 = ElementKind("Line2", 2, 1)
TRI3 = ElementKind("Tri3", 3, 2, 2)
QUAD4 = ElementKind("Quad4", 4, 2, 2)
TET4 = ElementKind("Tet4", 4, 3, 3)
TRI3_MANIFOLD = ElementKind("Tri3Manifold", 3, 2, 3)

KINDS = {k.tag: k for k in (LINE2, TRI3, QUAD4, TET4, TRI3_MANIFOLD)}

# reference-element measures
_REF_MEASURE = {"Line2": 2.0, "Tri3": 0.5, "Quad4": 4.0, "Tet4": 1.0 / 6.0, "Tri3Manifold": 0.5}

SAFE_SQRT_EPS = 1e-30
DET_REL_EPS = 1e-14


def get_kind(kind) -> ElementKind:
    if isinstance(kind, ElementKind):
        return kind
    try:
        return KINDS[kind]
    except KeyError:
        raise UnsupportedElement(f"unknown element kind {kind!r}") from None


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (n_q, d_ref)
    weights: np.ndarray  # (n_q,)

    @property
    def n_q(self):
        return len(self.weights)


def reference_rule(kind) -> QuadRule:
    """Quadrature rule: 1-point for simplices and Line2, 2x2 Gauss for Quad4."""
    kind = get_kind(kind)
    tag = kind.tag
    if tag == "Line2":
        return QuadRule(np.array([[0.0]]), np.array([2.0]))
    if tag in ("Tri3", "Tri3Manifold"):
        return QuadRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]))
    if tag == "Quad4":
        g = 1.0 / np.sqrt(3.0)
        pts = np.array([[-g, -g], [g, -g], [g, g], [-g, g]])
        return QuadRule(pts, np.ones(4))
    if tag == "Tet4":
        return QuadRule(np.array([[0.25, 0.25, 0.25]]), np.array([1.0 / 6.0]))
    raise UnsupportedElement(tag)


def reference_nodes(kind) -> np.ndarray:
    tag = get_kind(kind).tag
    if tag == "Line2":
        return np.array([[-1.0], [1.0]])
    if tag in ("Tri3", "Tri3Manifold"):
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if tag == "Quad4":
        return np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    if tag == "Tet4":
        return np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    raise UnsupportedElement(tag)


def shape_functions(kind, xi):
    """Nodal shape function values at reference point(s) ``xi``: (..., n_en)."""
    kind = get_kind(kind)
    tag = kind.tag
    if tag == "Line2":
        s = xi[..., 0]
        return anp.stack([0.5 * (1.0 - s), 0.5 * (1.0 + s)], -1)
    if tag in ("Tri3", "Tri3Manifold"):
        r, s = xi[..., 0], xi[..., 1]
        return anp.stack([1.0 - r - s, r, s], -1)
    if tag == "Quad4":
        r, s = xi[..., 0], xi[..., 1]
        return anp.stack(
            [
                0.25 * (1.0 - r) * (1.0 - s),
                0.25 * (1.0 + r) * (1.0 - s),
                0.25 * (1.0 + r) * (1.0 + s),
                0.25 * (1.0 - r) * (1.0 + s),
            ],
            -1,
        )
    if tag == "Tet4":
        r, s, t = xi[..., 0], xi[..., 1], xi[..., 2]
        return anp.stack([1.0 - r - s - t, r, s, t], -1)
    raise UnsupportedElement(tag)


def shape_gradients(kind, xi):
    """Reference gradients dN_a/dxi_r at ``xi``: (..., n_en, d_ref)."""
    kind = get_kind(kind)
    tag = kind.tag
    lead = anp.shape(xi)[:-1]
    if tag == "Line2":
        g = np.array([[-0.5], [0.5]])
        return np.broadcast_to(g, lead + g.shape).copy()
    if tag in ("Tri3", "Tri3Manifold"):
        g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return np.broadcast_to(g, lead + g.shape).copy()
    if tag == "Tet4":
        g = np.array([[-1.0, -1.0, -1.0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        return np.broadcast_to(g, lead + g.shape).copy()
    if tag == "Quad4":
        r, s = xi[..., 0], xi[..., 1]
        dr = anp.stack([-0.25 * (1 - s), 0.25 * (1 - s), 0.25 * (1 + s), -0.25 * (1 + s)], -1)
        ds = anp.stack([-0.25 * (1 - r), -0.25 * (1 + r), 0.25 * (1 + r), 0.25 * (1 - r)], -1)
        return anp.stack([dr, ds], -1)
    raise UnsupportedElement(tag)


def _det_eps(nodal_coords, d_ref):
    x = primal(nodal_coords)
    diag = np.linalg.norm(x.max(axis=-2) - x.min(axis=-2), axis=-1)
    return DET_REL_EPS * diag**d_ref


def jacobian(kind, xi, nodal_coords, check=True):
    """Return ``(J, detJ)`` with J[r, k] = dx_k/dxi_r.

    For embedded elements (d_ref < d_phys) detJ is the metric measure
    sqrt(det(J Jᵀ)).
    """
    kind = get_kind(kind)
    dN = shape_gradients(kind, xi)
    J = anp.einsum("...ar,...ak->...rk", dN, nodal_coords)
    d_ref = kind.d_ref
    d_phys = anp.shape(nodal_coords)[-1]
    if d_ref == d_phys:
        detJ = anp.det(J)
    else:
        G = anp.matmul(J, anp.swapaxes(J, -1, -2))
        detJ = anp.safe_sqrt(anp.det(G), SAFE_SQRT_EPS)
    if check:
        bad = primal(detJ) <= _det_eps(nodal_coords, d_ref)
        if np.any(bad):
            raise DegenerateElement(
                f"{int(np.sum(bad))} degenerate or inverted {kind.tag} element(s)"
            )
    return J, detJ


def jacobian_pinv(J):
    """J⁻¹ for square J, Jᵀ(JJᵀ)⁻¹ otherwise; shape (..., d_phys, d_ref)."""
    d_ref, d_phys = anp.shape(J)[-2:]
    if d_ref == d_phys:
        return anp.inv(J)
    Jt = anp.swapaxes(J, -1, -2)
    return anp.matmul(Jt, anp.inv(anp.matmul(J, Jt)))


def basis_gradients(kind, xi, nodal_coords):
    """Physical basis gradients dN_a/dx_k: (..., n_en, d_phys), plus detJ."""
    J, detJ = jacobian(kind, xi, nodal_coords)
    dN = shape_gradients(kind, xi)
    Jp = jacobian_pinv(J)
    return anp.einsum("...ar,...kr->...ak", dN, Jp), detJ


def physical_gradient(kind, xi, nodal_coords, nodal_values):
    """Gradient of the interpolated field, shape (..., m, d_phys).

    ``nodal_values`` has shape (..., n_en, m). On embedded elements the
    result is the surface (tangential) gradient.
    """
    dNdx, _ = basis_gradients(kind, xi, nodal_coords)
    return anp.einsum("...am,...ak->...mk", nodal_values, dNdx)
