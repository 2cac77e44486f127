"""Run metrics: critical distance, mean |acceleration|, stabilization time, low-speed
region volume and fuel."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .objectives import trajectory_fuel
from .world import KEY_ROLES

METRICS_HEADER = ("condition", "controller", "optimizer", "seed",
                  "Crit.Dist.", "Aver.Acc.", "Stab.Time", "LSRV", "Fuel")


@dataclass(frozen=True)
class MetricsRow:
    condition: str
    controller: str
    optimizer: str
    seed: int
    crit_dist: float  # m
    aver_acc: float  # m/s^2
    stab_time: float  # s
    lsrv: float  # m^2
    fuel: float  # L

    def cells(self) -> tuple:
        f = lambda x: "nan" if not math.isfinite(x) else f"{x:.6f}"
        return (self.condition, self.controller, self.optimizer, str(self.seed),
                f(self.crit_dist), f(self.aver_acc), f(self.stab_time), f(self.lsrv), f(self.fuel))


def _key_trajs(result) -> list:
    key = {r.value for r in KEY_ROLES}
    return [result.trajectories[i] for i, r in sorted(result.roles.items()) if r in key]


def critical_distance(result) -> float:
    """Smallest bumper gap between VR and whatever follows it in lane 1 after the merge."""
    if result.t_merge is None:
        return math.nan
    road = result.cfg.road
    vr_id = next(i for i, r in result.roles.items() if r == "VR")
    vr = result.trajectories[vr_id]
    after = vr.t >= result.t_merge - 1e-9
    best = math.inf
    half = 0.5 * road.lane_width
    for vid, tr in result.trajectories.items():
        if vid == vr_id:
            continue
        n = min(len(tr), len(vr))
        in_lane = np.abs(tr.y[:n] - road.main1_y) < half
        behind = tr.x[:n] < vr.x[:n]
        m = after[:n] & in_lane & behind
        if m.any():
            gap = vr.x[:n][m] - tr.x[:n][m] - 0.5 * (vr.length + tr.length)
            best = min(best, float(gap.min()))
    return best


def stabilization_time(result, threshold: float, window: float) -> float:
    """Seconds from merge completion until every key vehicle holds |a| < threshold for
    ``window`` seconds. Censored at the end of the run."""
    if result.t_merge is None:
        return math.nan
    trs = _key_trajs(result)
    t = trs[0].t
    calm = np.all(np.stack([np.abs(tr.a) < threshold for tr in trs]), axis=0)
    dt = float(t[1] - t[0])
    need = int(round(window / dt)) + 1  # samples spanning the window inclusive
    start = int(np.searchsorted(t, result.t_merge - 1e-9))
    run = 0
    for k in range(start, len(t)):
        run = run + 1 if calm[k] else 0
        if run >= need:
            return float(t[k - need + 1] - result.t_merge)
    return float(t[-1] - result.t_merge)


def low_speed_volume(result, v_low: float) -> float:
    total = 0.0
    for tr in result.trajectories.values():
        if len(tr) > 1:
            total += float(trapezoid(np.maximum(v_low - tr.v, 0.0) * tr.v, tr.t))
    return total


def compute_metrics(result, cfg=None) -> MetricsRow:
    cfg = cfg or result.cfg
    m = cfg.metrics
    t0 = result.t_plan if result.t_plan is not None else 0.0
    trs = [tr.window(t0, math.inf) for tr in _key_trajs(result)]
    aver = float(np.mean(np.concatenate([np.abs(tr.a) for tr in trs])))
    fuel = sum(trajectory_fuel(tr, cfg.fuel) for tr in trs)
    return MetricsRow(cfg.condition, result.controller, result.optimizer, result.seed,
                      critical_distance(result), aver,
                      stabilization_time(result, m.stab_accel, m.stab_window),
                      low_speed_volume(result, m.v_low), fuel)


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(r.cells())
