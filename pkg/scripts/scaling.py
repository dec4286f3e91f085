"""Time residual, hvp, colored and scatter-add builds against problem size.

Writes one CSV per mode and prints the log-log slopes of residual and hvp
times. Usage: python3 scripts/scaling.py [--problem elasticity2d] [--out dir]
"""

import argparse
from pathlib import Path

from fegrad.bench import BenchConfig, BenchProblem, loglog_slope, median_time, run_bench

SIZES = {
    "elasticity2d": [10_000, 30_000, 100_000, 300_000, 1_000_000],
    "elasticity3d": [10_000, 30_000, 100_000, 300_000],
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", default="elasticity2d", choices=sorted(SIZES))
    ap.add_argument("--batch", type=int, default=5000)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--out", default="bench_results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)
    sizes = SIZES[args.problem]

    n, t_res, t_hvp = [], [], []
    for d in sizes:
        p = BenchProblem(args.problem, d, args.batch)
        n.append(p.n_dofs)
        t_res.append(median_time(p.residual, args.reps))
        t_hvp.append(median_time(p.hvp, args.reps))
        print(f"{p.n_dofs:>9d} DoFs  residual {t_res[-1]:.4f} s  hvp {t_hvp[-1]:.4f} s")
    print(f"slope residual {loglog_slope(n, t_res):.3f}, hvp {loglog_slope(n, t_hvp):.3f}")

    # assembled modes stop at 1e5 DoFs to keep the run short
    small = [d for d in sizes if d <= 100_000]
    for mode in ("jvp", "colored", "scatter"):
        cfg = BenchConfig(args.problem, small if mode != "jvp" else sizes, mode, args.batch, args.reps,
                          str(out / f"{args.problem}_{mode}.csv"))
        for r in run_bench(cfg):
            print(f"{mode:8s} {r.n_dofs:>9d} {r.time_s:.4f} s  colors={r.n_colors}  {r.status}")


if __name__ == "__main__":
    main()
