"""Command-line front end.

    fegrad verify <example> [--problem file.json] [--out dir]
    fegrad bench --problem elasticity2d --mode jvp --dofs 1e4,1e5 --reps 3 --out bench.csv

Set FEGRAD_NUM_THREADS to cap the BLAS and numba thread pools.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

import numba
import numpy as np
from threadpoolctl import threadpool_limits

from .bench import MODES, PROBLEMS, BenchConfig, run_bench
from .errors import UnknownExample
from .problems import EXAMPLES, get_example
from .problems.common import config_dict, load_config, write_nodal_csv, write_vtk

THREADS_ENV = "FEGRAD_NUM_THREADS"


def _thread_cap():
    """Context manager capping BLAS and numba threads, if requested."""
    n = os.environ.get(THREADS_ENV)
    if not n:
        return contextlib.nullcontext()
    n = int(n)
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    return threadpool_limits(limits=n)


def _parse_dofs(text):
    return [int(float(t)) for t in text.split(",") if t.strip()]


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return str(x)


def _write_outputs(out, name, cfg, result):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}_report.txt").write_text(result.report() + "\n")
    (out / f"{name}_config.json").write_text(json.dumps(config_dict(cfg), indent=2, default=_json_default))
    data = {k: v for k, v in result.data.items() if k not in ("mesh", "u", "c")}
    (out / f"{name}_data.json").write_text(json.dumps(data, indent=2, default=_json_default))
    mesh = result.data.get("mesh")
    field = result.data.get("u", result.data.get("c"))
    if mesh is not None and field is not None:
        vals = np.asarray(field).reshape(mesh.n_nodes, -1)
        names = ["c"] if vals.shape[1] == 1 else [f"u{k}" for k in "xyz"[: vals.shape[1]]]
        write_nodal_csv(out / f"{name}_nodal.csv", mesh.coords, vals, names)
        write_vtk(out / f"{name}.vtk", mesh, {names[0] if vals.shape[1] == 1 else "u": vals})


def cmd_verify(args):
    try:
        run, cfg_cls = get_example(args.example)
    except UnknownExample as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    try:
        cfg = load_config(cfg_cls, args.problem)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: bad problem file: {exc}", file=sys.stderr)
        return 2
    result = run(cfg)
    print(f"== {args.example} ==")
    print(result.report())
    if args.out:
        _write_outputs(args.out, args.example, cfg, result)
    print("PASS" if result.passed else "FAIL")
    return 0 if result.passed else 1


def cmd_bench(args):
    try:
        cfg = BenchConfig(
            problem=args.problem,
            dofs=_parse_dofs(args.dofs),
            mode=args.mode,
            batch_size=args.batch,
            repetitions=args.reps,
            out=args.out,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for r in run_bench(cfg):
        colors = "" if r.n_colors is None else f" colors={r.n_colors}"
        print(f"{r.problem} {r.mode} n_dofs={r.n_dofs} time={r.time_s:.4g}s "
              f"throughput={r.throughput:.4g} DoF/s{colors} [{r.status}]")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="fegrad", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run a verification example")
    v.add_argument("example", help=f"one of: {', '.join(sorted(EXAMPLES))}")
    v.add_argument("--problem", help="JSON file overriding the example configuration")
    v.add_argument("--out", help="directory for report, CSV and VTK output")
    v.set_defaults(func=cmd_verify)
    b = sub.add_parser("bench", help="time tangent operations against problem size")
    b.add_argument("--problem", choices=PROBLEMS, default="elasticity2d")
    b.add_argument("--mode", choices=MODES, default="jvp")
    b.add_argument("--dofs", default="1e4,3e4,1e5", help="comma-separated DoF targets")
    b.add_argument("--batch", type=int, default=50_000)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--out", help="CSV output path")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    with _thread_cap():
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
