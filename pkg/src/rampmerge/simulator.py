"""Full runs: the HCOMC controller (optimized cooperative merge) and the FIFO baseline."""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import ScenarioConfig
from .merge import MergeScene, apply_plan, build_plan
from .objectives import select_unique
from .optimizer import MergePlan, nsga2_run, pso_run, sa_run, with_seed
from .scenario import attach_background_game, build_scenario, label_roles
from .traffic_models import idm_accel
from .world import Lane, Role, World

MERGE_TOL = 0.05  # m, VR counts as merged once this close to the lane-1 centreline
TRAJ_HEADER = ("t", "id", "role", "kind", "lane", "x", "y", "v", "a")


@dataclass
class RunResult:
    cfg: ScenarioConfig
    controller: str
    optimizer: str
    seed: int
    trajectories: dict
    roles: dict  # id -> role name
    kinds: dict  # id -> kind name
    events: list
    t_plan: Optional[float] = None  # control-zone entry
    t_merge: Optional[float] = None
    collision: Optional[tuple] = None
    forced_stop: bool = False
    plan: Optional[MergePlan] = None
    pareto: list = field(default_factory=list)
    plan_attempts: int = 0

    @property
    def merged(self) -> bool:
        return self.t_merge is not None

    def key_ids(self) -> dict:
        return {r: i for i, r in self.roles.items() if r != Role.BACKGROUND.value}


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class _Runner:
    """Shared stepping loop: merge detection, forced-stop bookkeeping and stop time."""

    def __init__(self, world: World, cfg: ScenarioConfig):
        self.w = world
        self.cfg = cfg
        self.vr = world.by_role(Role.VR)
        self.t_merge = None
        self.forced_stop = False
        self.t_plan = None

    def done(self) -> bool:
        w, m = self.w, self.cfg.metrics
        if w.collision is not None or w.t >= m.max_time - 1e-9:
            return True
        return self.t_merge is not None and w.t >= self.t_merge + m.post_merge_horizon - 1e-9

    def step(self) -> None:
        w, vr = self.w, self.vr
        w.step()
        if self.t_merge is None and abs(vr.y - w.road.main1_y) <= MERGE_TOL:
            self.t_merge = round(w.t, 9)
            w.events.append((round(w.t, 6), "merge_complete", vr.id))
        if (not self.forced_stop and vr.lane == Lane.RAMP and vr.lc is None and vr.speed < 0.1
                and vr.x > w.road.ramp_merge_end_x - vr.length - vr.idm.min_gap_s0 - 1.0):
            self.forced_stop = True
            w.events.append((round(w.t, 6), "forced_stop", vr.id))

    def approach(self) -> None:
        cz = self.w.road.control_zone_start_x
        while self.vr.x < cz and not self.done():
            self.step()
        self.t_plan = self.w.t
        label_roles(self.w)

    def result(self, controller: str, optimizer: str, seed: int, **kw) -> RunResult:
        w = self.w
        col = w.collision.ids if w.collision is not None else None
        return RunResult(self.cfg, controller, optimizer, seed, w.trajectories(),
                         {v.id: v.role.value for v in w.vehicles},
                         {v.id: v.kind.value for v in w.vehicles}, list(w.events),
                         self.t_plan, self.t_merge, col, self.forced_stop, **kw)


def choose_plan(scene: MergeScene, cfg: ScenarioConfig, optimizer: str = "nsga2", seed: int = 0):
    """Run the optimizer on a frozen scene; returns (chosen plan or None, Pareto set)."""
    thr = cfg.objectives.safety_threshold
    if optimizer == "nsga2":
        front = nsga2_run(scene, with_seed(cfg.ga, seed))
        feas = [p for p in front if p.feasible]
        return (select_unique(feas, thr) if feas else None), front
    if optimizer == "pso":
        best = pso_run(scene, with_seed(cfg.pso, seed))
    elif optimizer == "sa":
        best = sa_run(scene, with_seed(cfg.sa, seed))
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    return (best if best.feasible else None), [best]


def _resample_hdv_errors(world: World, cfg: ScenarioConfig, rng) -> None:
    s = cfg.hdv.noise_std
    for v in world.vehicles:
        if v.history is None:
            continue
        g, dv = np.clip(1.0 + s * rng.standard_normal(2), 0.55, 1.45)
        v.hdv = dataclasses.replace(v.hdv, gap_error_factor=float(g), dspeed_error_factor=float(dv))


def _prepare(cfg: ScenarioConfig, seed: Optional[int], world: Optional[World]):
    seed = cfg.seed if seed is None else seed
    if world is None:
        world = build_scenario(cfg, seed)
    attach_background_game(world, cfg)
    return world, seed


def _noise_hook(runner: _Runner, cfg: ScenarioConfig, seed: int) -> Callable[[], None]:
    if cfg.hdv.noise_std <= 0:
        return lambda: None
    rng = np.random.default_rng(derive_seed(seed, 7))
    state = {"next": 0.0}

    def hook():
        if runner.w.t >= state["next"] - 1e-9:
            _resample_hdv_errors(runner.w, cfg, rng)
            state["next"] = runner.w.t + cfg.game.cadence
    return hook


def run_hcomc(cfg: ScenarioConfig, seed: Optional[int] = None, optimizer: Optional[str] = None,
              world: Optional[World] = None) -> RunResult:
    """Plan once at control-zone entry; on no feasible plan VR yields and replans each cadence."""
    world, seed = _prepare(cfg, seed, world)
    optimizer = optimizer or cfg.optimizer
    r = _Runner(world, cfg)
    noise = _noise_hook(r, cfg, seed)
    noise()
    r.approach()
    vr = r.vr
    chosen, pareto, attempts = None, [], 0
    next_try = world.t
    while not r.done():
        if chosen is None and vr.lane == Lane.RAMP and vr.lc is None and world.t >= next_try - 1e-9:
            if attempts:
                label_roles(world)
            scene = MergeScene(world, cfg)
            chosen, pareto = choose_plan(scene, cfg, optimizer, derive_seed(seed, attempts))
            attempts += 1
            if chosen is not None:
                for v in world.vehicles:
                    if v.role != Role.BACKGROUND:
                        v.may_change_lanes = False
                apply_plan(world, build_plan(scene, chosen.decision))
            else:
                world.events.append((round(world.t, 6), "yield", vr.id))
                next_try = world.t + cfg.control.replan_cadence
        noise()
        r.step()
    return r.result("hcomc", optimizer, seed, plan=chosen, pareto=pareto, plan_attempts=attempts)


def fifo_slot_leader(world: World, vr) -> Optional[str]:
    """Last lane-1 vehicle projected to reach the merge point no later than VR.

    Constant-speed projection; a tie goes to the mainline vehicle.
    """
    xm = world.road.merge_point_x
    eta_vr = (xm - vr.x) / max(vr.speed, 0.1)
    best, best_eta = None, -np.inf
    for v in world.vehicles:
        if v is vr or not v.occupies(Lane.MAIN1):
            continue
        eta = (xm - v.x) / max(v.speed, 0.1)
        if eta <= eta_vr and (eta > best_eta or (eta == best_eta and v.id < best.id)):
            best, best_eta = v, eta
    return best.id if best is not None else None


def fifo_gap_ok(world: World, vr, safe_decel: float) -> bool:
    lead = world.leader(vr, Lane.MAIN1)
    foll = world.follower(vr, Lane.MAIN1)
    lim = world.settings.decel_limit
    if lead is not None:
        gap = world.gap(vr, lead)
        if gap <= 0 or idm_accel(gap, vr.speed, vr.speed - lead.speed, vr.idm, lim) < -safe_decel:
            return False
    if foll is not None:
        gap = world.gap(foll, vr)
        if gap <= 0 or idm_accel(gap, foll.speed, foll.speed - vr.speed, foll.idm, lim) < -safe_decel:
            return False
    return True


MIN_LC_LENGTH = 10.0  # m, shortest lateral path allowed at the ramp end


def run_fifo(cfg: ScenarioConfig, seed: Optional[int] = None, world: Optional[World] = None) -> RunResult:
    """First-in-first-out merging: VR queues behind its arrival-order slot leader and
    changes lanes once both lane-1 neighbours accept the gap."""
    world, seed = _prepare(cfg, seed, world)
    r = _Runner(world, cfg)
    noise = _noise_hook(r, cfg, seed)
    noise()
    r.approach()
    vr = r.vr
    road = world.road
    for v in world.vehicles:
        if v.role != Role.BACKGROUND:
            v.may_change_lanes = False
    vr.fifo_leader = fifo_slot_leader(world, vr)
    world.events.append((round(world.t, 6), "fifo_slot", vr.fifo_leader or ""))
    dur = world.lc_duration(vr)
    while not r.done():
        if vr.lane == Lane.RAMP and vr.lc is None and vr.x >= road.ramp_merge_start_x:
            slot = world.by_id(vr.fifo_leader) if vr.fifo_leader else None
            behind_slot = slot is None or slot.x > vr.x
            x_end = min(vr.x + max(vr.speed, 5.0) * dur, road.ramp_merge_end_x - 0.5 * vr.length)
            if behind_slot and x_end - vr.x >= MIN_LC_LENGTH and fifo_gap_ok(world, vr, cfg.control.fifo_safe_decel):
                world.start_lane_change(vr, Lane.MAIN1, dur, vr.x, x_end)
        noise()
        r.step()
    return r.result("fifo", "none", seed)


def planning_scene(cfg: ScenarioConfig, seed: Optional[int] = None) -> MergeScene:
    """Frozen snapshot at VR's control-zone entry, as the HCOMC controller first sees it."""
    world, seed = _prepare(cfg, seed, None)
    r = _Runner(world, cfg)
    _noise_hook(r, cfg, seed)()
    r.approach()
    return MergeScene(world, cfg)


def run(cfg: ScenarioConfig, seed: Optional[int] = None) -> RunResult:
    if cfg.controller == "fifo":
        return run_fifo(cfg, seed)
    return run_hcomc(cfg, seed)


# -- CSV --------------------------------------------------------------------------------

def _f(x: float) -> str:
    return f"{x:.6f}"


def trajectory_rows(result: RunResult):
    road = result.cfg.road
    for vid in sorted(result.trajectories):
        tr = result.trajectories[vid]
        for k in range(len(tr)):
            lane = road.nearest_lane(float(tr.y[k])).value
            yield (_f(tr.t[k]), vid, result.roles[vid], result.kinds[vid], lane,
                   _f(tr.x[k]), _f(tr.y[k]), _f(tr.v[k]), _f(tr.a[k]))


def write_trajectory_csv(result: RunResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_HEADER)
        w.writerows(trajectory_rows(result))


def trajectory_csv_text(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJ_HEADER)
    w.writerows(trajectory_rows(result))
    return buf.getvalue()

