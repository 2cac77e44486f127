"""HCOMC vs FIFO over the five condition presets.

Writes per-run trajectories and metrics.csv to OUT (default runs/condition_grid) and
prints mean metrics per condition and controller.

    python scripts/condition_grid.py --seeds 0-9
"""

import argparse
import time

from rampmerge.cli import ExperimentGrid, parse_seeds, run_experiment, summarize
from rampmerge.config import PRESETS
from rampmerge.metrics import METRICS_HEADER


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=parse_seeds, default=list(range(10)))
    ap.add_argument("--out", default="runs/condition_grid")
    args = ap.parse_args()

    t0 = time.perf_counter()
    grid = ExperimentGrid.build(PRESETS, ("hcomc", "fifo"), ("nsga2",), args.seeds)
    rows, collisions = run_experiment(grid, args.out)
    table = summarize(rows)
    print(("{:<12}{:<8}{:<7}{:>4}" + "{:>12}" * 5).format(
        "condition", "ctrl", "opt", "n", *METRICS_HEADER[4:]))
    for s in table:
        print(("{:<12}{:<8}{:<7}{:>4}" + "{:>12.3f}" * 5).format(*s))

    by = {(s[0], s[1]): s for s in table}
    wins = 0
    for c in PRESETS:
        h, f = by[(c, "hcomc")], by[(c, "fifo")]
        crit, stab = h[4] > f[4], h[6] < f[6]
        wins += crit and stab
        print(f"{c}: Crit.Dist {'HCOMC' if crit else 'FIFO'} better, "
              f"Stab.Time {'HCOMC' if stab else 'FIFO'} better")
    print(f"conditions where HCOMC wins both: {wins}/{len(PRESETS)}")
    print(f"collisions: {collisions}   wall time {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
