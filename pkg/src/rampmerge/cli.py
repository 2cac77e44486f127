"""Command-line front end: single runs, experiment grids and optimizer comparisons."""

from __future__ import annotations

import argparse
import csv
import itertools
import math
import sys
import tempfile
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import (CONTROLLERS, OPTIMIZERS, PRESETS, ConfigError, ScenarioConfig, _merge,
                     from_dict, preset_data, read_config_data, validate)
from .metrics import METRICS_HEADER, MetricsRow, compute_metrics, write_metrics_csv
from .objectives import scalarized_cost
from .simulator import choose_plan, derive_seed, planning_scene, run, write_trajectory_csv

EXIT_OK, EXIT_USAGE, EXIT_COLLISION, EXIT_INTERNAL = 0, 1, 2, 3
METRICS_FILE = "metrics.csv"
COMPARISON_HEADER = ("optimizer", "n_seeds", "cost") + METRICS_HEADER[4:]


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class GridCell:
    condition: str
    controller: str
    optimizer: str  # "none" for FIFO
    seed: int

    def stem(self) -> str:
        return f"{self.condition}_{self.controller}_{self.optimizer}_s{self.seed}"


@dataclass(frozen=True)
class ExperimentGrid:
    cells: tuple
    base: dict  # config mapping every cell starts from

    @classmethod
    def build(cls, conditions, controllers, optimizers, seeds, base: Optional[dict] = None,
              cap: Optional[int] = None) -> "ExperimentGrid":
        """Cartesian product of the axes. FIFO does not optimize, so it gets one cell per
        (condition, seed) whatever the optimizer list."""
        base = dict(base or {})
        cells = []
        for cond, ctrl, seed in itertools.product(conditions, controllers, seeds):
            if cond not in PRESETS:
                raise ConfigError("condition", f"unknown preset {cond!r}; choose from {PRESETS}")
            if ctrl not in CONTROLLERS:
                raise ConfigError("controller", f"must be one of {CONTROLLERS}")
            opts = ["none"] if ctrl == "fifo" else list(optimizers)
            for opt in opts:
                if opt != "none" and opt not in OPTIMIZERS:
                    raise ConfigError("optimizer", f"must be one of {OPTIMIZERS}")
                cells.append(GridCell(cond, ctrl, opt, int(seed)))
        if not cells:
            raise UsageError("experiment grid is empty")
        if cap is None:
            cap = cell_config(base, cells[0]).grid_cap
        if len(cells) > cap:
            raise ConfigError("grid_cap", f"grid has {len(cells)} cells, cap is {cap}")
        return cls(tuple(cells), base)


def cell_config(base: dict, cell: GridCell, use_env: bool = True) -> ScenarioConfig:
    """Base mapping, then the condition preset, then environment overrides."""
    data = _merge(base, preset_data(cell.condition))
    cfg = from_dict(data, use_env=use_env)
    opt = cfg.optimizer if cell.optimizer == "none" else cell.optimizer
    return validate(cfg.with_(controller=cell.controller, optimizer=opt, seed=cell.seed))


def ensure_writable(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out):
            pass
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    return out


def run_experiment(grid: ExperimentGrid, out_dir, use_env: bool = True) -> tuple:
    """Run every cell; write one trajectory CSV per cell and ``metrics.csv``.

    Returns (metrics rows, number of cells with a collision).
    """
    out = ensure_writable(out_dir)
    cfgs = [cell_config(grid.base, c, use_env) for c in grid.cells]  # fail fast on bad config
    rows, collisions = [], 0
    for cell, cfg in zip(grid.cells, cfgs):
        res = run(cfg, cfg.seed)
        write_trajectory_csv(res, out / f"{cell.stem()}.csv")
        rows.append(compute_metrics(res))
        collisions += res.collision is not None
    write_metrics_csv(rows, out / METRICS_FILE)
    return rows, collisions


def summarize(rows: Sequence[MetricsRow]) -> list:
    """Mean metrics per (condition, controller, optimizer), in first-seen order."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.condition, r.controller, r.optimizer), []).append(r)
    out = []
    for key, rs in groups.items():
        means = [_nanmean([getattr(r, f) for r in rs])
                 for f in ("crit_dist", "aver_acc", "stab_time", "lsrv", "fuel")]
        out.append((*key, len(rs), *means))
    return out


def _nanmean(xs) -> float:
    a = np.asarray(xs, dtype=float)
    a = a[np.isfinite(a)]
    return float(a.mean()) if a.size else math.nan


@dataclass(frozen=True)
class OptimizerSummary:
    optimizer: str
    costs: tuple  # scalarized cost of the chosen plan, per seed
    metrics: tuple  # mean Crit.Dist., Aver.Acc., Stab.Time, LSRV, Fuel of full runs

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs))

    def cells(self) -> tuple:
        f = lambda x: "nan" if not math.isfinite(x) else f"{x:.6f}"
        return (self.optimizer, str(len(self.costs)), f(self.mean_cost), *(f(m) for m in self.metrics))


def compare_optimizers(condition: str, seeds: Sequence[int], base: Optional[dict] = None,
                       optimizers: Sequence[str] = OPTIMIZERS, full_runs: bool = True,
                       use_env: bool = True) -> list:
    """Each optimizer plans on the same frozen control-zone snapshot per seed.

    The chosen plan's scalarized cost is recorded; with ``full_runs`` each optimizer
    also drives a complete HCOMC run whose metrics are averaged over seeds.
    """
    base = dict(base or {})
    costs = {o: [] for o in optimizers}
    rows = {o: [] for o in optimizers}
    for seed in seeds:
        cfg = cell_config(base, GridCell(condition, "hcomc", optimizers[0], int(seed)), use_env)
        scene = planning_scene(cfg, cfg.seed)
        o = cfg.objectives
        for opt in optimizers:
            # same plan seed as the first planning attempt of a full run
            chosen, _ = choose_plan(scene, cfg, opt, derive_seed(cfg.seed, 0))
            obj = chosen.objectives if chosen is not None else None
            costs[opt].append(scalarized_cost(obj, o.bounds, chosen is not None, o.safety_threshold))
            if full_runs:
                rows[opt].append(compute_metrics(run(cfg.with_(optimizer=opt), cfg.seed)))
    out = []
    for opt in optimizers:
        means = tuple(_nanmean([getattr(r, f) for r in rows[opt]])
                      for f in ("crit_dist", "aver_acc", "stab_time", "lsrv", "fuel"))
        out.append(OptimizerSummary(opt, tuple(costs[opt]), means))
    return out


# -- argument handling ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> list:
    """``"3"``, ``"0,2,5"`` or ``"0-9"`` (inclusive)."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else (part, "")
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    return out


def _csv_list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rampmerge", description="On-ramp merging simulator for mixed HDV/CAV traffic.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate one configuration")
    r.add_argument("--config", help="YAML config file")
    r.add_argument("--condition", choices=PRESETS, help="condition preset layered over the config")
    r.add_argument("--seed", type=int)
    r.add_argument("--controller", choices=CONTROLLERS)
    r.add_argument("--optimizer", choices=OPTIMIZERS)
    r.add_argument("--out", help="directory for the trajectory and metrics CSVs")

    g = sub.add_parser("grid", help="run a condition x controller x optimizer x seed grid")
    g.add_argument("--config", help="YAML config file shared by every cell")
    g.add_argument("--condition", action="append", choices=PRESETS,
                   help="repeatable; default all presets")
    g.add_argument("--controller", type=_csv_list, default=list(CONTROLLERS),
                   help="comma list (default hcomc,fifo)")
    g.add_argument("--optimizer", type=_csv_list, default=["nsga2"], help="comma list (default nsga2)")
    g.add_argument("--seeds", type=parse_seeds, default=[0], help='e.g. "0-9" or "0,3"')
    g.add_argument("--seed", type=int, help="single seed, shorthand for --seeds N")
    g.add_argument("--out", required=True)

    c = sub.add_parser("compare-optimizers", help="NSGA-II vs PSO vs SA on shared scenes")
    c.add_argument("--config")
    c.add_argument("--condition", choices=PRESETS, default="condition1")
    c.add_argument("--seeds", type=parse_seeds, default=list(range(10)))
    c.add_argument("--seed", type=int, help="single seed, shorthand for --seeds N")
    c.add_argument("--optimizer", type=_csv_list, default=list(OPTIMIZERS))
    c.add_argument("--cost-only", action="store_true", help="skip the full runs and their metrics")
    c.add_argument("--out", help="directory for comparison.csv")

    v = sub.add_parser("validate-config", help="check a config file and exit")
    v.add_argument("--config", required=True)
    return p


def _base(args) -> dict:
    return read_config_data(args.config) if args.config else {}


def _fmt_row(cells) -> str:
    return "  ".join(str(c) for c in cells)


def _cmd_run(args) -> int:
    data = _base(args)
    if args.condition:
        data = _merge(data, preset_data(args.condition))
    cfg = from_dict(data, use_env=True)
    flags = {k: getattr(args, k) for k in ("seed", "controller", "optimizer") if getattr(args, k) is not None}
    cfg = validate(cfg.with_(**flags))
    out = ensure_writable(args.out) if args.out else None
    res = run(cfg, cfg.seed)
    row = compute_metrics(res)
    if out is not None:
        opt = res.optimizer
        write_trajectory_csv(res, out / f"{cfg.condition}_{cfg.controller}_{opt}_s{cfg.seed}.csv")
        write_metrics_csv([row], out / METRICS_FILE)
    print(_fmt_row(METRICS_HEADER))
    print(_fmt_row(row.cells()))
    if res.collision is not None:
        print(f"collision between {res.collision[0]} and {res.collision[1]}", file=sys.stderr)
        return EXIT_COLLISION
    return EXIT_OK


def _seeds(args) -> list:
    return [args.seed] if args.seed is not None else args.seeds


def _cmd_grid(args) -> int:
    grid = ExperimentGrid.build(args.condition or list(PRESETS), args.controller, args.optimizer,
                                _seeds(args), _base(args))
    rows, collisions = run_experiment(grid, args.out)
    print(_fmt_row(("condition", "controller", "optimizer", "n") + METRICS_HEADER[4:]))
    for s in summarize(rows):
        print(_fmt_row(s[:4] + tuple(f"{x:.3f}" for x in s[4:])))
    if collisions:
        print(f"{collisions} cell(s) recorded a collision", file=sys.stderr)
        return EXIT_COLLISION
    return EXIT_OK


def _cmd_compare(args) -> int:
    for o in args.optimizer:
        if o not in OPTIMIZERS:
            raise ConfigError("optimizer", f"must be one of {OPTIMIZERS}")
    out = ensure_writable(args.out) if args.out else None
    table = compare_optimizers(args.condition, _seeds(args), _base(args), tuple(args.optimizer),
                               full_runs=not args.cost_only)
    print(_fmt_row(COMPARISON_HEADER))
    for s in table:
        print(_fmt_row(s.cells()))
    if out is not None:
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COMPARISON_HEADER)
            w.writerows(s.cells() for s in table)
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = from_dict(_base(args), use_env=True)
    print(f"ok: condition={cfg.condition} controller={cfg.controller} optimizer={cfg.optimizer}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "grid": _cmd_grid, "compare-optimizers": _cmd_compare,
            "validate-config": _cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:  # noqa: BLE001 - anything else is a bug
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
