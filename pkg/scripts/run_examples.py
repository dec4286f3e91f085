"""Run every verification example and print its checks.

Usage: python3 scripts/run_examples.py [name ...] [--out results/]
"""

import argparse
import sys
import time

from fegrad.problems import EXAMPLES, get_example


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", default=sorted(EXAMPLES))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    failed = []
    for name in args.names:
        run, cfg_cls = get_example(name)
        t0 = time.perf_counter()
        res = run(cfg_cls())
        print(f"== {name} ({time.perf_counter() - t0:.1f} s) ==")
        print(res.report())
        if not res.passed:
            failed.append(name)
    print("all passed" if not failed else f"failed: {', '.join(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
