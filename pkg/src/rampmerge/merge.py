"""Merge decisions: turning a decision vector into virtual-vehicle plans, rolling them out
on a frozen snapshot of the key vehicles, and scoring the result."""

from __future__ import annotations

import dataclasses
import enum
import itertools
import math
from dataclasses import dataclass
from typing import Optional

from .collision import MergeSequence, classify_merge_gap, trajectories_collide
from .config import ScenarioConfig
from .objectives import (InfeasibleGapError, ObjectiveVector, trajectory_fuel, u_eff, u_safe)
from .planning import (CubicMotion, IllConditionedError, InfeasiblePlanError, check_plan,
                       plan_lateral_vmc, plan_longitudinal_vr, solve_cubic_bvp)
from .traffic_models import free_accel, idm_accel
from .world import KEY_ROLES, Kind, Lane, Role, ScheduledLaneChange, Vehicle, VirtualLeader, World

PENALTY = 1e6
PENALTY_VECTOR = ObjectiveVector(PENALTY, PENALTY, -PENALTY)
SETTLE_TIME = 1.0  # s past tf allowed for VR to finish its lane change


class VmcMode(enum.IntEnum):
    NO_COOPERATION = 0
    LONGITUDINAL = 1
    LATERAL = 2


@dataclass(frozen=True)
class DecisionVector:
    """``gap`` 0 merges between VMF and VMC, 1 between VMC and VMR.
    ``merge_end_time`` is the horizon (s) from the snapshot to the end of VR's lane change."""

    gap: int
    merge_end_time: float
    vmc_mode: VmcMode

    def key(self) -> tuple:
        return (int(self.gap), round(float(self.merge_end_time), 9), int(self.vmc_mode))


@dataclass(frozen=True)
class Evaluation:
    decision: DecisionVector
    objectives: ObjectiveVector
    feasible: bool
    reason: str = ""


@dataclass
class PlanSpec:
    """Everything needed to execute one decision on a world."""

    decision: DecisionVector
    t0: float
    tf: float
    vr_motion: CubicMotion
    vr_lane_change: ScheduledLaneChange
    leader: Optional[str]
    follower: Optional[str]
    vv1: Optional[tuple] = None  # (vehicle id, VirtualLeader)
    vmc_lane_change: Optional[tuple] = None  # (vehicle id, ScheduledLaneChange)
    vv2: Optional[tuple] = None


def idm_lane_accel(world: World, v: Vehicle, lane: Lane) -> float:
    """Plain IDM acceleration behind the current leader in ``lane``."""
    lead = world.leader(v, lane)
    if lead is None:
        return free_accel(v.speed, v.idm)
    gap = world.gap(v, lead)
    if gap <= 0:
        return -world.settings.decel_limit
    return idm_accel(gap, v.speed, v.speed - lead.speed, v.idm, world.settings.decel_limit)


def ramp_end_accel(world: World, v: Vehicle) -> float:
    gap = world.road.ramp_merge_end_x - v.x - 0.5 * v.length
    if gap <= 0:
        return -world.settings.decel_limit
    return idm_accel(gap, v.speed, v.speed, v.idm, world.settings.decel_limit)


class MergeScene:
    """Frozen copy of the six key vehicles at planning time plus a per-decision cache."""

    def __init__(self, world: World, cfg: ScenarioConfig):
        self.cfg = cfg
        self.road = world.road
        self.t0 = world.t
        self.k0 = world.k
        self.settings = dataclasses.replace(world.settings, record=True, check_collisions=False,
                                            enable_game=False)
        self.vehicles = {}
        for role in KEY_ROLES:
            v = world.by_role(role)
            if v is not None:
                self.vehicles[role] = v.clone()
        if Role.VR not in self.vehicles:
            raise ValueError("scene has no ramp vehicle")
        self._cache: dict = {}
        self.evaluations = 0  # rollouts actually simulated

    def has(self, role: Role) -> bool:
        return role in self.vehicles

    @property
    def n_gaps(self) -> int:
        return min(self.cfg.decision.n_gaps, 2 if self.has(Role.VMC) else 1)

    def snap_time(self, T: float) -> float:
        d = self.cfg.decision
        T = min(max(float(T), d.t_min), d.t_max)
        k = round((T - d.t_min) / d.time_step)
        return min(d.t_min + k * d.time_step, d.t_max)

    def time_grid(self) -> list:
        d = self.cfg.decision
        n = int(math.floor((d.t_max - d.t_min) / d.time_step + 1e-9))
        out = [d.t_min + k * d.time_step for k in range(n + 1)]
        if d.t_max - out[-1] > 1e-9:
            out.append(d.t_max)
        return out

    def canonical(self, d: DecisionVector) -> DecisionVector:
        mode = VmcMode(int(d.vmc_mode))
        gap = min(max(int(d.gap), 0), self.n_gaps - 1)
        if mode == VmcMode.LATERAL or not self.has(Role.VMC):
            gap = 0  # VMC leaves lane 1 (or is absent): only the VMF/VMR gap remains
        return DecisionVector(gap, self.snap_time(d.merge_end_time), mode)

    def decision_grid(self) -> list:
        out = {}
        for g, T, m in itertools.product(range(self.n_gaps), self.time_grid(), VmcMode):
            c = self.canonical(DecisionVector(g, T, m))
            out.setdefault(c.key(), c)
        return [out[k] for k in sorted(out)]

    def evaluate(self, d: DecisionVector) -> Evaluation:
        c = self.canonical(d)
        hit = self._cache.get(c.key())
        if hit is None:
            hit = _evaluate(self, c)
            self._cache[c.key()] = hit
            self.evaluations += 1
        return hit

    def world(self) -> World:
        """Mini-world of the key vehicles; the front-most vehicles in each lane hold speed."""
        vs = [v.clone() for v in self.vehicles.values()]
        for v in vs:
            v.role = next(r for r, o in self.vehicles.items() if o.id == v.id)
            v.frozen = v.role in (Role.VMF, Role.VNF)
            v.may_change_lanes = False
        return World(self.road, vs, self.settings, t=self.t0, step_index=self.k0)


# -- planning ---------------------------------------------------------------------------

def _lc_duration(scene: MergeScene, v: Vehicle) -> float:
    lc = scene.cfg.lane_change
    return lc.duration_hdv if v.kind == Kind.HDV else lc.duration_cav


def _gap_pair(scene: MergeScene, d: DecisionVector):
    get = scene.vehicles.get
    if d.vmc_mode == VmcMode.LATERAL or not scene.has(Role.VMC):
        return get(Role.VMF), get(Role.VMR)
    if d.gap == 0:
        return get(Role.VMF), get(Role.VMC)
    return get(Role.VMC), get(Role.VMR)


def _spacing(v: float, follower: Vehicle) -> float:
    """Front-to-front spacing at the follower's desired dynamic gap ``s0 + v*Ts``."""
    p = follower.idm
    return p.min_gap_s0 + v * p.safe_headway_Ts + follower.length


def vr_target(scene: MergeScene, d: DecisionVector, tf: float) -> tuple:
    """VR's (x, v) at the end of the merge for the chosen gap.

    Positions are constant-speed projections of the gap's neighbours to ``tf``. VR ends
    at the leader's speed in the centre of the gap. With one neighbour it keeps that
    neighbour's desired spacing, or its own free motion if that is further away.
    """
    vr = scene.vehicles[Role.VR]
    lead, foll = _gap_pair(scene, d)
    T = tf - scene.t0
    if lead is not None:
        v_t = lead.speed
    elif foll is not None:
        v_t = foll.speed
    else:
        v_t = min(vr.idm.desired_speed_v0, vr.speed + 0.5 * vr.idm.max_accel_a * T)
    x_free = vr.x + 0.5 * (vr.speed + v_t) * T
    x_lead = lead.x + lead.speed * T if lead is not None else None
    x_foll = foll.x + foll.speed * T if foll is not None else None
    if x_lead is not None and x_foll is not None:
        return 0.5 * (x_lead + x_foll), v_t
    if x_lead is not None:
        return min(x_free, x_lead - _spacing(v_t, vr)), v_t
    if x_foll is not None:
        return max(x_free, x_foll + _spacing(v_t, foll)), v_t
    return x_free, v_t


def _handover_start(follower: Vehicle, leader: Optional[Vehicle]) -> tuple:
    """Initial (x, v) of a virtual leader that takes over from ``leader``.

    A real leader further away than the follower's desired dynamic spacing exerts no
    braking, so the virtual vehicle starts no further ahead than that spacing.
    """
    near = follower.x + _spacing(follower.speed, follower)
    if leader is None or leader.x > near:
        return near, follower.speed if leader is None else leader.speed
    return leader.x, leader.speed


def build_plan(scene: MergeScene, d: DecisionVector) -> PlanSpec:
    """Construct the virtual-vehicle plans for ``d``; raises on infeasible geometry."""
    d = scene.canonical(d)
    cfg = scene.cfg
    lim = cfg.control.decel_limit
    road = scene.road
    t0 = scene.t0
    tf = t0 + d.merge_end_time
    vr = scene.vehicles[Role.VR]
    xt, vt = vr_target(scene, d, tf)
    motion = solve_cubic_bvp(vr.x, vr.speed, xt, vt, t0, tf)
    a_plan = cfg.control.plan_max_accel
    check_plan(motion, a_plan, lim)
    t_lc = _lc_duration(scene, vr)
    t_ls = tf - t_lc
    x_ls, x_le = float(motion.position(t_ls)), float(motion.position(tf))
    if x_ls < road.ramp_merge_start_x or x_le > road.ramp_merge_end_x - 0.5 * vr.length:
        raise InfeasiblePlanError(
            f"lane change over [{x_ls:.1f}, {x_le:.1f}] m leaves the merge section")
    spec = PlanSpec(d, t0, tf, motion, ScheduledLaneChange(t_ls, Lane.MAIN1, t_lc, x_ls, x_le),
                    None, None)
    lead, foll = _gap_pair(scene, d)
    spec.leader = lead.id if lead is not None else None
    spec.follower = foll.id if foll is not None else None

    if d.vmc_mode == VmcMode.LONGITUDINAL:
        if foll is None:
            raise InfeasiblePlanError("no gap follower to cooperate")
        if foll.kind != Kind.CAV:
            raise InfeasiblePlanError("gap follower is human-driven")
        # the follower's current leader hands over to a virtual vehicle that ends on VR
        cur_lead = scene.vehicles.get(Role.VMF) if foll.role == Role.VMC else scene.vehicles.get(Role.VMC)
        vv1 = plan_longitudinal_vr(_handover_start(foll, cur_lead), (xt, vt), t0, tf, a_plan, lim)
        spec.vv1 = (foll.id, VirtualLeader(vv1, vr.length))

    elif d.vmc_mode == VmcMode.LATERAL:
        vmc = scene.vehicles.get(Role.VMC)
        if vmc is None:
            raise InfeasiblePlanError("no VMC")
        if vmc.kind != Kind.CAV:
            raise InfeasiblePlanError("VMC is human-driven")
        t_end = t_ls
        t_start = t_end - _lc_duration(scene, vmc)
        if t_start < t0 - 1e-9:
            raise InfeasiblePlanError("horizon too short for VMC to clear lane 1 first")
        spec.vmc_lane_change = (vmc.id, ScheduledLaneChange(t_start, Lane.MAIN2, _lc_duration(scene, vmc)))
        vnr = scene.vehicles.get(Role.VNR)
        if vnr is not None and vnr.kind == Kind.CAV:
            start = _handover_start(vnr, scene.vehicles.get(Role.VNF))
            goal = (vmc.x + vmc.speed * (t_end - t0), vmc.speed)
            vv2 = plan_lateral_vmc(start, goal, t0, t_end, a_plan, lim)
            spec.vv2 = (vnr.id, VirtualLeader(vv2, vmc.length))
    return spec


def apply_plan(world: World, spec: PlanSpec) -> None:
    vr = world.by_role(Role.VR)
    vr.feedforward = spec.vr_motion
    vr.accel_cap = max(spec.vr_motion.accel_range()[1], vr.idm.max_accel_a)
    vr.lc_schedule = spec.vr_lane_change
    vr.ramp_obstacle = False
    vr.fifo_leader = None
    if spec.vv1 is not None:
        world.by_id(spec.vv1[0]).virtual_leaders.append(spec.vv1[1])
    if spec.vmc_lane_change is not None:
        world.by_id(spec.vmc_lane_change[0]).lc_schedule = spec.vmc_lane_change[1]
    if spec.vv2 is not None:
        world.by_id(spec.vv2[0]).virtual_leaders.append(spec.vv2[1])
    world.events.append((round(world.t, 6), "plan", spec.decision.key()))


# -- rollout and scoring ----------------------------------------------------------------

_EFF_ROLES = (Role.VR, Role.VMC, Role.VMR, Role.VNR)


def _infeasible(d: DecisionVector, reason: str) -> Evaluation:
    return Evaluation(d, PENALTY_VECTOR, False, reason)


def _before_accels(w: World) -> dict:
    out = {}
    for r in _EFF_ROLES:
        v = w.by_role(r)
        if v is None:
            continue
        out[r.value] = ramp_end_accel(w, v) if r == Role.VR else idm_lane_accel(w, v, v.lane)
    return out


def _after_accels(w: World) -> dict:
    out = {}
    for r in _EFF_ROLES:
        v = w.by_role(r)
        if v is not None:
            out[r.value] = idm_lane_accel(w, v, v.lane)
    return out


def rollout(scene: MergeScene, spec: PlanSpec):
    """Simulate the plan on the mini-world until VR's lane change ends (or tf + settle).

    Returns the world and the time the lane change finished, or None if it did not.
    """
    w = scene.world()
    apply_plan(w, spec)
    vr = w.by_role(Role.VR)
    n_max = int(round((spec.tf + SETTLE_TIME - w.t) / w.dt))
    done_t = None
    for _ in range(n_max):
        w.step()
        if done_t is None and vr.lane == Lane.MAIN1 and vr.lc is None:
            done_t = w.t
            break
    return w, done_t


def _evaluate(scene: MergeScene, d: DecisionVector) -> Evaluation:
    cfg = scene.cfg
    try:
        spec = build_plan(scene, d)
    except (InfeasiblePlanError, IllConditionedError) as exc:
        return _infeasible(d, str(exc))
    w0 = scene.world()
    before = _before_accels(w0)
    w, done_t = rollout(scene, spec)
    if done_t is None:
        return _infeasible(d, "lane change did not finish")
    trajs = w.trajectories()
    ids = sorted(trajs)
    for a, b in itertools.combinations(ids, 2):
        if trajectories_collide(trajs[a], trajs[b]) is not None:
            return _infeasible(d, f"collision {a}/{b}")
    vr = w.by_role(Role.VR)
    vmc = w.by_role(Role.VMC)
    vmr = w.by_role(Role.VMR)
    seq = classify_merge_gap(trajs[vr.id], trajs[vmc.id] if vmc else None,
                             trajs[vmr.id] if vmr else None)
    if d.vmc_mode == VmcMode.LATERAL or vmc is None:
        ok = seq != MergeSequence.INFEASIBLE
    else:
        ok = seq == (MergeSequence.AHEAD_OF_VMC if d.gap == 0 else MergeSequence.BETWEEN_VMC_AND_VMR)
    if not ok:
        return _infeasible(d, f"merge sequence {seq.value}")
    foll = w.follower(vr, Lane.MAIN1)
    if foll is None:
        safe = 0.0
    else:
        try:
            safe = u_safe(foll.speed, vr.speed, w.gap(foll, vr), cfg.safety)
        except InfeasibleGapError as exc:
            return _infeasible(d, str(exc))
    fuel = trajectory_fuel(trajs[vr.id].window(scene.t0, spec.tf), cfg.fuel)
    if vmc is not None:
        fuel += trajectory_fuel(trajs[vmc.id].window(scene.t0, spec.tf), cfg.fuel)
    eff = u_eff(before, _after_accels(w), cfg.objectives.eta)
    return Evaluation(d, ObjectiveVector(float(safe), float(fuel), float(eff)), True)


def evaluate(decision: DecisionVector, scene: MergeScene) -> Evaluation:
    return scene.evaluate(decision)
