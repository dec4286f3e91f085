"""Transient heat potential and advection-diffusion virtual work."""

from __future__ import annotations

import numpy as np

from ..ad import ops as anp
from ..ad.api import grad_scalar


def transient_heat_potential(T_new, T_prev, dt, kappa, op):
    """∫ κ ∇T·∇T + (1/2dt)(T − T_prev)² dΩ; its minimiser is one
    backward-Euler step."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def density(view, Te, Tpe):
        g = view.grad(Te)
        diff = view.eval(Te) - view.eval(Tpe)
        return kappa * anp.sum(g * g, axis=(-2, -1)) + (0.5 / dt) * anp.sum(diff * diff, axis=-1)

    return op.energy(density, T_new, T_prev)


def rotation_velocity(op, omega):
    """Tangent velocity of a rotation about z, one vector per element.

    Built as the surface curl of the P1 interpolant of z,
    u_T = −ω n_T × ∇_s z_h, so it is exactly tangent to every facet and
    the discrete advection term conserves ∫c.
    """
    coords = op.mesh.coords
    X = coords[op.conn]
    n = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    # outward orientation for a closed surface around the origin
    sign = np.sign(np.einsum("ek,ek->e", n, X.mean(axis=1)))
    n *= sign[:, None]
    z = coords[:, 2]
    grad_z = np.einsum("ea,eqak->eqk", z[op.conn], op.dNdx)
    return -omega * np.cross(n[:, None, :], grad_z)


def advection_diffusion_virtual_work(c, v, velocity, D, op, c_prev=None, dt=None):
    """W(c, v) = ∫ (u·∇_s c) v + D ∇_s c·∇_s v dS [+ ∫ (c − c_prev)/dt v dS].

    ``velocity`` has shape (N_el, N_q, d). The residual is ∇_v W at v = 0.
    """
    fields = [c, v] + ([c_prev] if c_prev is not None else [])

    def density(view, ce, ve, *rest):
        gc = view.grad(ce)[:, :, 0, :]
        gv = view.grad(ve)[:, :, 0, :]
        vq = view.eval(ve)[..., 0]
        vel = view.data["velocity"]
        adv = anp.sum(vel * gc, axis=-1) * vq
        out = adv + D * anp.sum(gc * gv, axis=-1)
        if rest:
            cq = view.eval(ce)[..., 0]
            cp = view.eval(rest[0])[..., 0]
            out = out + (cq - cp) / dt * vq
        return out

    return op.energy(density, *fields, data={"velocity": np.asarray(velocity)})


def virtual_work_residual(W, c, n):
    """r(c) = ∇_v W(c, v)|_{v=0}; ``c`` may be a Dual for tangent actions."""
    return grad_scalar(lambda v: W(c, v), np.zeros(n))
