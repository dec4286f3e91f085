"""Distance-2 color counts of structured meshes as they grow.

Greedy coloring of a mesh pattern is bounded by the local coupling, so the
count stays fixed once the mesh has an interior. The tiny 3D meshes are
skipped because their boundary layers dominate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..coloring import distance2_coloring, is_valid_coloring, sparsity_from_mesh
from ..mesh import structured_grid
from .common import Result


@dataclass
class ColoringBoundConfig:
    # cells per side: 2D gives about 1e3, 1e4, 1e5 DoFs (m = 2)
    sizes_2d: list = field(default_factory=lambda: [21, 70, 223])
    # 3D gives about 1e4, 5e4, 1e5 DoFs (m = 2)
    sizes_3d: list = field(default_factory=lambda: [16, 29, 37])
    m: int = 2
    bound_2d: int = 48
    bound_3d: int = 110


def color_counts(sizes, dim, m):
    out = []
    for n in sizes:
        mesh = structured_grid(n, n, kind="Tri3") if dim == 2 else structured_grid(n, n, n, kind="Tet4")
        pat = sparsity_from_mesh(mesh, m)
        col = distance2_coloring(pat)
        out.append((m * mesh.n_nodes, col.n_colors, is_valid_coloring(pat, col)))
    return out


def run(cfg: ColoringBoundConfig | None = None) -> Result:
    cfg = cfg or ColoringBoundConfig()
    res = Result("coloring-bound")
    for dim, sizes, bound in ((2, cfg.sizes_2d, cfg.bound_2d), (3, cfg.sizes_3d, cfg.bound_3d)):
        counts = color_counts(sizes, dim, cfg.m)
        colors = [c for _, c, _ in counts]
        label = "Tri3" if dim == 2 else "Tet4"
        for n_dofs, c, valid in counts:
            res.add(f"{label} n_colors at {n_dofs} DoFs", c, f"<= {bound}, valid", c <= bound and valid)
        same = len(set(colors)) == 1
        res.add(f"{label} n_colors size-independent (spread)", max(colors) - min(colors), "0", same)
        res.data[f"counts_{dim}d"] = counts
    return res
