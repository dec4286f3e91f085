"""Peak tape length of one residual evaluation at fixed batch size.

Usage: python3 scripts/memory_contract.py [--batch 5000]
"""

import argparse

from fegrad.bench import BenchProblem, peak_tape


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=5000)
    args = ap.parse_args()
    for n_el in (10_000, 100_000, 1_000_000):
        p = BenchProblem.for_elements("elasticity2d", n_el, args.batch)
        print(f"N_el={p.op.n_elements:>8d}  peak tape entries={peak_tape(p.residual)}")


if __name__ == "__main__":
    main()
