"""Two-pass node-to-segment penalty contact in 2D.

The gap is the normal penetration of a node behind the opposing segment
(positive means penetration). Segment selection is made on the primal
geometry; the gap itself is differentiated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad import ops as anp
from ..ad.core import primal


@dataclass(frozen=True)
class ContactSurface:
    """Surface nodes and segments of one body (global node ids).

    Segments are oriented so that the body lies to their left; the outward
    normal is the tangent rotated by −90°.
    """

    nodes: np.ndarray
    segments: np.ndarray  # (n_seg, 2)
    weights: np.ndarray  # tributary length per node

    @classmethod
    def from_segments(cls, segments, coords):
        seg = np.asarray(segments, dtype=np.int64)
        nodes = np.unique(seg)
        L = np.linalg.norm(coords[seg[:, 1]] - coords[seg[:, 0]], axis=1)
        w_all = np.zeros(len(coords))
        np.add.at(w_all, seg[:, 0], 0.5 * L)
        np.add.at(w_all, seg[:, 1], 0.5 * L)
        return cls(nodes, seg, w_all[nodes])


def _closest_segment(xp, a, b):
    """Index of the nearest segment for every point (primal geometry)."""
    ab = b - a
    L2 = np.einsum("sk,sk->s", ab, ab)
    t = np.einsum("psk,sk->ps", xp[:, None, :] - a[None], ab) / L2
    t = np.clip(t, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(xp[:, None, :] - proj, axis=-1)
    return np.argmin(d, axis=1)


def node_to_segment_gaps(x_nodes, x_a, x_b):
    """Penetration gaps of points against their nearest segment.

    ``x_nodes`` (n, 2); ``x_a``/``x_b`` (n_seg, 2) are current segment ends.
    """
    s = _closest_segment(primal(x_nodes), primal(x_a), primal(x_b))
    a = anp.getitem(x_a, s)
    b = anp.getitem(x_b, s)
    ab = b - a
    L = anp.sqrt(anp.sum(ab * ab, axis=-1))
    tang = ab / L[:, None]
    # outward normal of a segment with the body on its left
    normal = anp.stack([anp.getitem(tang, (slice(None), 1)), -anp.getitem(tang, (slice(None), 0))], -1)
    return -anp.sum((x_nodes - a) * normal, axis=-1)


def penalty_contact_energy(x1, x2, surf1: ContactSurface, surf2: ContactSurface, kappa):
    """½ of the sum of both passes of Σ_nodes w ½κ max(g, 0)².

    ``x1`` and ``x2`` are current nodal positions (N, 2) of the two bodies.
    """

    def one_pass(xa, sa: ContactSurface, xb, sb: ContactSurface):
        pts = anp.getitem(xa, sa.nodes)
        g = node_to_segment_gaps(pts, anp.getitem(xb, sb.segments[:, 0]), anp.getitem(xb, sb.segments[:, 1]))
        gp = anp.maximum(g, 0.0)
        return anp.sum(0.5 * kappa * sa.weights * gp * gp)

    return 0.5 * (one_pass(x1, surf1, x2, surf2) + one_pass(x2, surf2, x1, surf1))
