"""Timing harness for residual, hvp, colored and scatter-add tangents."""

from __future__ import annotations

import csv
import gc
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ad.api import grad_scalar, hvp
from .ad.core import tape_counter
from .coloring import distance2_coloring, sparsity_from_mesh
from .mesh import structured_grid
from .operator import Operator
from .physics.elasticity import ElasticParams, elastic_density, neo_hookean_density
from .sparse import scatter_add_assemble, sparse_hessian

PROBLEMS = ("elasticity2d", "elasticity3d")
MODES = ("jvp", "colored", "scatter")
CSV_HEADER = ["problem", "mode", "n_dofs", "time_s", "throughput_dofs_per_s", "n_colors", "status"]


@dataclass
class BenchConfig:
    problem: str = "elasticity2d"
    dofs: list = field(default_factory=lambda: [10_000, 30_000, 100_000])
    mode: str = "jvp"
    batch_size: int = 50_000
    repetitions: int = 3
    out: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        d = np.asarray(self.dofs)
        if d.size == 0 or np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise ValueError("dof targets must be positive and ascending")
        if self.repetitions < 3:
            raise ValueError("repetitions must be >= 3")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class BenchRecord:
    problem: str
    mode: str
    n_dofs: int
    time_s: float
    n_colors: int | None = None
    status: str = "ok"
    peak_tape_entries: int | None = None

    @property
    def throughput(self):
        return self.n_dofs / self.time_s if self.time_s > 0 else float("nan")

    def row(self):
        return [
            self.problem,
            self.mode,
            self.n_dofs,
            f"{self.time_s:.6g}",
            f"{self.throughput:.6g}",
            "" if self.n_colors is None else self.n_colors,
            self.status,
        ]


class BenchProblem:
    """Neo-Hookean body on a structured unit square or cube."""

    def __init__(self, problem, target_dofs, batch_size=50_000, seed=0):
        if problem == "elasticity2d":
            n = max(1, int(round(np.sqrt(target_dofs / 2.0))) - 1)
            self.mesh = structured_grid(n, n, kind="Tri3")
            self.m = 2
        elif problem == "elasticity3d":
            n = max(1, int(round((target_dofs / 3.0) ** (1 / 3))) - 1)
            self.mesh = structured_grid(n, n, n, kind="Tet4")
            self.m = 3
        else:
            raise ValueError(f"unknown problem {problem!r}")
        self.problem = problem
        self.op = Operator(self.mesh, m=self.m, batch_size=batch_size)
        self.density = elastic_density(neo_hookean_density, ElasticParams.from_E_nu(1.0, 0.3))
        self.n_dofs = self.m * self.mesh.n_nodes
        rng = np.random.default_rng(seed)
        # smooth evaluation point, mesh-independent strain magnitude
        X = self.mesh.coords
        self.u = (0.01 * np.sin(np.pi * X[:, ::-1]) * X).ravel()
        self.v = rng.standard_normal(self.n_dofs)
        self._pattern = None
        self._coloring = None

    @classmethod
    def for_elements(cls, problem, n_elements, batch_size=50_000):
        """Problem sized by element count (2n² triangles or 6n³ tetrahedra)."""
        if problem == "elasticity2d":
            n = max(1, int(round(np.sqrt(n_elements / 2.0))))
            return cls(problem, 2 * (n + 1) ** 2, batch_size)
        n = max(1, int(round((n_elements / 6.0) ** (1 / 3))))
        return cls(problem, 3 * (n + 1) ** 3, batch_size)

    def energy(self, u):
        return self.op.energy(self.density, u)

    @property
    def pattern(self):
        if self._pattern is None:
            self._pattern = sparsity_from_mesh(self.mesh, self.m)
        return self._pattern

    @property
    def coloring(self):
        if self._coloring is None:
            self._coloring = distance2_coloring(self.pattern)
        return self._coloring

    def residual(self):
        return grad_scalar(self.energy, self.u)

    def hvp(self):
        return hvp(self.energy, self.u, self.v)

    def colored(self):
        return sparse_hessian(self.energy, self.u, self.pattern, self.coloring)

    def scatter(self):
        # unbatched: every element in one pass
        return scatter_add_assemble(self.density, self.op, self.u, self.pattern)


def median_time(fn, repetitions=3):
    """Median wall time of ``repetitions`` calls after one warm-up call.

    As in timeit, the cycle collector is paused inside the timed region.
    """
    fn()
    times = []
    enabled = gc.isenabled()
    try:
        for _ in range(repetitions):
            gc.collect()
            gc.disable()
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
            if enabled:
                gc.enable()
    finally:
        if enabled:
            gc.enable()
    return float(np.median(times))


def peak_tape(fn):
    tape_counter.reset()
    fn()
    return tape_counter.peak


def bench_one(problem, mode, target, batch_size=50_000, repetitions=3) -> BenchRecord:
    try:
        p = BenchProblem(problem, target, batch_size)
        n_colors = None
        if mode == "jvp":
            fn = p.hvp
        elif mode == "colored":
            fn = p.colored
            n_colors = p.coloring.n_colors
        elif mode == "scatter":
            fn = p.scatter
            p.pattern  # noqa: B018  (built outside the timed region)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        t = median_time(fn, repetitions)
        return BenchRecord(problem, mode, p.n_dofs, t, n_colors, "ok", peak_tape(p.residual))
    except MemoryError:
        return BenchRecord(problem, mode, int(target), float("nan"), None, "out_of_memory")


def run_bench(cfg: BenchConfig) -> list[BenchRecord]:
    records = [bench_one(cfg.problem, cfg.mode, d, cfg.batch_size, cfg.repetitions) for d in cfg.dofs]
    if cfg.out:
        write_csv(records, cfg.out)
    return records


def write_csv(records, path, append=False):
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def loglog_slope(n, t):
    """Least-squares slope of log t against log n."""
    return float(np.polyfit(np.log(np.asarray(n, float)), np.log(np.asarray(t, float)), 1)[0])
