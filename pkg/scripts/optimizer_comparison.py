"""NSGA-II vs PSO vs SA on identical control-zone snapshots of one condition preset.

    python scripts/optimizer_comparison.py --condition condition1 --seeds 0-9
"""

import argparse
import time

import numpy as np

from rampmerge.cli import COMPARISON_HEADER, compare_optimizers, parse_seeds
from rampmerge.config import PRESETS


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--condition", choices=PRESETS, default="condition1")
    ap.add_argument("--seeds", type=parse_seeds, default=list(range(10)))
    ap.add_argument("--cost-only", action="store_true")
    args = ap.parse_args()

    t0 = time.perf_counter()
    table = compare_optimizers(args.condition, args.seeds, full_runs=not args.cost_only)
    print("  ".join(COMPARISON_HEADER))
    for s in table:
        print("  ".join(s.cells()))
    # per-seed costs show where the optimizers part ways
    costs = np.array([s.costs for s in table])
    print("\nseed  " + "  ".join(f"{s.optimizer:>8}" for s in table))
    for j, seed in enumerate(args.seeds):
        print(f"{seed:>4}  " + "  ".join(f"{c:8.4f}" for c in costs[:, j]))
    print(f"wall time {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
