"""Vehicles, road geometry and the fixed-step world update shared by full runs and plan rollouts."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .collision import VehicleFootprint, footprints_collide
from .planning import CubicMotion, TransitionBlend, blended_accel
from .traffic_models import (B_EMERGENCY, CavParams, HdvParams, IdmParams,
                             LaneChangePoly, StateHistory, cav_accel, fit_quintic, free_accel,
                             hdv_accel, idm_accel)
from .trajectory import TrajectoryRecorder

NO_LEADER_GAP = 1e4  # m, perceived gap recorded when nothing is ahead


class Role(str, enum.Enum):
    VR = "VR"
    VMC = "VMC"
    VMF = "VMF"
    VMR = "VMR"
    VNF = "VNF"
    VNR = "VNR"
    BACKGROUND = "Background"


KEY_ROLES = (Role.VR, Role.VMC, Role.VMF, Role.VMR, Role.VNF, Role.VNR)


class Kind(str, enum.Enum):
    HDV = "HDV"
    CAV = "CAV"


class Lane(str, enum.Enum):
    RAMP = "Ramp"
    MAIN1 = "Main1"
    MAIN2 = "Main2"


@dataclass(frozen=True)
class RoadGeometry:
    lane_width: float = 3.75
    main1_y: float = 0.0
    main2_y: float = 3.75
    ramp_y: float = -3.75
    ramp_merge_start_x: float = 250.0
    ramp_merge_end_x: float = 450.0
    control_zone_start_x: float = 100.0

    def __post_init__(self):
        if not self.ramp_merge_end_x > self.ramp_merge_start_x:
            raise ValueError("ramp_merge_end_x must exceed ramp_merge_start_x")
        if not self.lane_width > 0:
            raise ValueError("lane_width must be positive")

    def lane_y(self, lane: Lane) -> float:
        return {Lane.RAMP: self.ramp_y, Lane.MAIN1: self.main1_y, Lane.MAIN2: self.main2_y}[lane]

    def nearest_lane(self, y: float) -> Lane:
        return min(Lane, key=lambda ln: abs(self.lane_y(ln) - y))

    @property
    def merge_point_x(self) -> float:
        return 0.5 * (self.ramp_merge_start_x + self.ramp_merge_end_x)


@dataclass(frozen=True)
class VehicleState:
    id: str
    role: Role
    kind: Kind
    x: float
    y: float
    speed: float
    accel: float
    heading: float
    length: float
    width: float
    lane: Lane


@dataclass
class LaneChange:
    poly: LaneChangePoly
    from_lane: Lane
    to_lane: Lane
    y_from: float
    blend: TransitionBlend


@dataclass
class ScheduledLaneChange:
    t_start: float
    to_lane: Lane
    duration: float
    x_start: Optional[float] = None  # fixed x-range, else derived from speed at start
    x_end: Optional[float] = None


@dataclass
class VirtualLeader:
    motion: CubicMotion
    length: float = 5.0


class Vehicle:
    def __init__(self, vid: str, kind: Kind, lane: Lane, x: float, y: float, speed: float,
                 idm: IdmParams, hdv: HdvParams, cav: CavParams, length: float = 5.0,
                 width: float = 2.0, role: Role = Role.BACKGROUND):
        self.id = vid
        self.role = role
        self.kind = kind
        self.lane = lane
        self.x = x
        self.y = y
        self.speed = speed
        self.accel = 0.0
        self.heading = 0.0
        self.length = length
        self.width = width
        self.idm = idm
        self.hdv = hdv
        self.cav = cav
        self.history: Optional[StateHistory] = (
            StateHistory(max(hdv.max_delay, 0.1) + 1.0) if kind == Kind.HDV else None)
        self.lc: Optional[LaneChange] = None
        self.lc_schedule: Optional[ScheduledLaneChange] = None
        self.virtual_leaders: list = []
        self.feedforward: Optional[CubicMotion] = None
        self.accel_cap: Optional[float] = None  # overrides the IDM maximum while set
        self.frozen = False  # constant speed, ignores everyone
        self.ramp_obstacle = True  # treat the end of the acceleration lane as a standing car
        self.fifo_leader: Optional[str] = None
        self.may_change_lanes = False
        self.next_decision_t = 0.0

    def clone(self) -> "Vehicle":
        v = Vehicle.__new__(Vehicle)
        v.__dict__.update(self.__dict__)
        v.history = self.history.copy() if self.history is not None else None
        v.virtual_leaders = list(self.virtual_leaders)
        return v

    def occupies(self, lane: Lane) -> bool:
        if self.lane == lane:
            return True
        lc = self.lc
        return lc is not None and (lc.from_lane == lane or lc.to_lane == lane)

    def state(self) -> VehicleState:
        return VehicleState(self.id, self.role, self.kind, self.x, self.y, self.speed, self.accel,
                            self.heading, self.length, self.width, self.lane)

    def footprint(self) -> VehicleFootprint:
        return VehicleFootprint((self.x, self.y), self.heading, self.length, self.width)

    def __repr__(self):
        return (f"Vehicle({self.id}, {self.role.value}, {self.kind.value}, {self.lane.value}, "
                f"x={self.x:.2f}, v={self.speed:.2f})")


@dataclass
class CollisionReport:
    t: float
    ids: tuple


@dataclass
class WorldSettings:
    dt: float = 0.1
    decel_limit: float = B_EMERGENCY
    lc_duration_hdv: float = 4.0
    lc_duration_cav: float = 3.0
    check_collisions: bool = True
    record: bool = True
    decision_cadence: float = 1.0
    lane_change_threshold: float = 0.3  # m/s^2 advantage before a game is played
    enable_game: bool = True


class World:
    """Fixed-step traffic world. Accelerations are computed from the state at ``t``
    for every vehicle, then applied with semi-implicit Euler."""

    def __init__(self, road: RoadGeometry, vehicles: list, settings: WorldSettings = None,
                 t: float = 0.0, step_index: int = 0):
        self.road = road
        self.vehicles = vehicles
        self.settings = settings or WorldSettings()
        self.t = t
        self.k = step_index
        self.collision: Optional[CollisionReport] = None
        self.events: list = []
        self.recorders = {v.id: TrajectoryRecorder(v.length, v.width, v.id) for v in vehicles}
        self.game = None  # callable(world, vehicle) -> bool, set by the scenario driver
        for v in vehicles:
            self._perceive(v)
        self._record()

    @property
    def dt(self) -> float:
        return self.settings.dt

    def by_id(self, vid: str) -> Vehicle:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def by_role(self, role: Role) -> Optional[Vehicle]:
        for v in self.vehicles:
            if v.role == role:
                return v
        return None

    def lc_duration(self, v: Vehicle) -> float:
        return self.settings.lc_duration_hdv if v.kind == Kind.HDV else self.settings.lc_duration_cav

    # -- neighbourhood -----------------------------------------------------------------
    def leader(self, v: Vehicle, lane: Lane) -> Optional[Vehicle]:
        best = None
        for o in self.vehicles:
            if o is v or o.x <= v.x or not o.occupies(lane):
                continue
            if best is None or o.x < best.x:
                best = o
        return best

    def follower(self, v: Vehicle, lane: Lane) -> Optional[Vehicle]:
        best = None
        for o in self.vehicles:
            if o is v or o.x >= v.x or not o.occupies(lane):
                continue
            if best is None or o.x > best.x:
                best = o
        return best

    @staticmethod
    def gap(rear: Vehicle, front) -> float:
        return front.x - rear.x - 0.5 * (front.length + rear.length)

    # -- control -----------------------------------------------------------------------
    def _follow(self, v: Vehicle, gap: float, v_lead: float, a_lead: float) -> float:
        if gap <= 0:
            return -self.settings.decel_limit
        if v.kind == Kind.CAV:
            return cav_accel(gap, v.speed, v.speed - v_lead, a_lead, v.cav, self.settings.decel_limit)
        return idm_accel(gap, v.speed, v.speed - v_lead, v.idm, self.settings.decel_limit)

    def _lane_accel(self, v: Vehicle, lane: Lane, delayed: bool) -> float:
        if delayed and v.history is not None:
            return hdv_accel(v.history, self.t, v.hdv, self.settings.decel_limit)
        lead = self.leader(v, lane)
        if lead is None:
            return free_accel(v.speed, v.idm)
        return self._follow(v, self.gap(v, lead), lead.speed, lead.accel)

    def _extra_leaders_accel(self, v: Vehicle) -> float:
        """Virtual leaders, FIFO slot leader and the ramp end; +inf when none apply."""
        t = self.t
        acc = math.inf
        for vl in v.virtual_leaders:
            m = vl.motion
            if m.t_begin - 1e-9 <= t <= m.t_end + 1e-9:
                xv = float(m.position(t))
                gap = xv - v.x - 0.5 * (vl.length + v.length)
                acc = min(acc, self._follow(v, gap, float(m.velocity(t)), float(m.acceleration(t))))
        if v.fifo_leader is not None and v.lane == Lane.RAMP and v.lc is None:
            lead = self.by_id(v.fifo_leader)
            gap = self.gap(v, lead)
            if gap > 0:
                acc = min(acc, self._follow(v, gap, lead.speed, lead.accel))
            else:
                acc = min(acc, self._pace_behind(v, lead))
        if v.lane == Lane.RAMP and v.lc is None and v.ramp_obstacle:
            gap = self.road.ramp_merge_end_x - v.x - 0.5 * v.length
            acc = min(acc, self._follow(v, gap, 0.0, 0.0) if gap > 0 else -self.settings.decel_limit)
        return acc

    def _pace_behind(self, v: Vehicle, lead: Vehicle) -> float:
        """Free-road IDM with the desired speed lowered so ``v`` reaches the merge point
        one safe time headway after ``lead``, which is still behind it."""
        xm = self.road.merge_point_x
        p = v.idm
        t_left = (xm - lead.x) / max(lead.speed, 0.1) + p.safe_headway_Ts
        v_req = max((xm - v.x) / t_left, 0.1)
        acc = p.max_accel_a * (1.0 - (v.speed / v_req) ** p.accel_exponent_delta)
        return max(acc, -self.settings.decel_limit)

    def control(self, v: Vehicle) -> float:
        if v.frozen:
            return 0.0
        t, dt = self.t, self.dt
        ff = v.feedforward
        if ff is not None and ff.t_begin - 1e-9 <= t < ff.t_end - 1e-9:
            # track the planned position exactly on the step grid
            a_plan = (float(ff.position(t + dt)) - v.x - v.speed * dt) / (dt * dt)
            a_model = math.inf
            for ln in (Lane.MAIN1, Lane.MAIN2):
                if v.occupies(ln):
                    lead = self.leader(v, ln)
                    if lead is not None:
                        a_model = min(a_model, self._follow(v, self.gap(v, lead), lead.speed, lead.accel))
            if a_model < -v.idm.comfort_decel_b:
                return min(a_plan, a_model)
            return a_plan
        delayed = v.kind == Kind.HDV
        if v.lc is not None:
            lc = v.lc
            a_ori = self._lane_accel(v, lc.from_lane, delayed)
            a_new = self._lane_accel(v, lc.to_lane, False)
            acc = blended_accel(a_ori, a_new, t, lc.blend)
            worst = min(a_ori, a_new)
            if worst < -v.idm.comfort_decel_b:
                acc = min(acc, worst)
        else:
            acc = self._lane_accel(v, v.lane, delayed)
        return min(acc, self._extra_leaders_accel(v))

    # -- bookkeeping -------------------------------------------------------------------
    def _perceive(self, v: Vehicle) -> None:
        if v.history is None:
            return
        lane = v.lc.from_lane if v.lc is not None else v.lane
        lead = self.leader(v, lane)
        if lead is None:
            v.history.append(self.t, NO_LEADER_GAP, v.speed, 0.0)
        else:
            v.history.append(self.t, max(self.gap(v, lead), 0.1), v.speed, v.speed - lead.speed)

    def _record(self) -> None:
        if not self.settings.record:
            return
        for v in self.vehicles:
            self.recorders[v.id].append(self.t, v.x, v.y, v.speed, v.accel, v.heading)

    def start_lane_change(self, v: Vehicle, to_lane: Lane, duration: float,
                          x_start: float | None = None, x_end: float | None = None) -> None:
        x0 = v.x if x_start is None else x_start
        x1 = x0 + max(v.speed, 5.0) * duration if x_end is None else x_end
        d = self.road.lane_y(to_lane) - self.road.lane_y(v.lane)
        poly = fit_quintic(x0, x1, d)
        v.lc = LaneChange(poly, v.lane, to_lane, self.road.lane_y(v.lane),
                          TransitionBlend.over(self.t, self.t + duration))
        v.lc_schedule = None
        self.events.append((round(self.t, 6), "lane_change_start", v.id, to_lane.value))

    def _update_lateral(self, v: Vehicle) -> None:
        lc = v.lc
        if lc is None:
            return
        poly = lc.poly
        if v.x >= poly.x_end - 1e-6:
            v.y = self.road.lane_y(lc.to_lane)
            v.heading = 0.0
            v.lane = lc.to_lane
            v.lc = None
            self.events.append((round(self.t, 6), "lane_change_end", v.id, lc.to_lane.value))
            return
        xc = min(max(v.x, poly.x_start), poly.x_end)
        v.y = lc.y_from + float(poly(xc))
        v.heading = math.atan(float(poly.slope(xc)))
        v.lane = self.road.nearest_lane(v.y)

    def _check_collisions(self) -> None:
        vs = self.vehicles
        for i in range(len(vs)):
            a = vs[i]
            for j in range(i + 1, len(vs)):
                b = vs[j]
                if abs(a.x - b.x) > 0.5 * (a.length + b.length) + 1.0 or abs(a.y - b.y) > 0.5 * (a.width + b.width) + 1.0:
                    continue
                if footprints_collide(a.footprint(), b.footprint()):
                    self.collision = CollisionReport(round(self.t, 6), (a.id, b.id))
                    self.events.append((round(self.t, 6), "collision", a.id, b.id))
                    return

    def step(self) -> None:
        if self.collision is not None:
            raise RuntimeError("cannot step a world with an active collision")
        dt = self.dt
        for v in self.vehicles:
            ff = v.feedforward
            if ff is not None and self.t >= ff.t_end - 1e-9:
                v.feedforward = None
                v.accel_cap = None
            s = v.lc_schedule
            if s is not None and self.t >= s.t_start - 1e-9 and v.lc is None:
                self.start_lane_change(v, s.to_lane, s.duration, s.x_start, s.x_end)
        accels = [self.control(v) for v in self.vehicles]
        lim = self.settings.decel_limit
        for v, a in zip(self.vehicles, accels):
            if v.frozen:
                a = 0.0
            else:
                # tolerance keeps exact plan tracking from being clipped by rounding
                cap = v.idm.max_accel_a if v.accel_cap is None else v.accel_cap
                a = min(cap * (1.0 + 1e-9), max(-lim, a))
            v_new = v.speed + a * dt
            if v_new < 0.0:
                v_new = 0.0
                a = -v.speed / dt
            v.accel = a
            v.speed = v_new
            v.x += v_new * dt
        self.k += 1
        self.t = self.k * dt
        for v in self.vehicles:
            self._update_lateral(v)
        for v in self.vehicles:
            self._perceive(v)
        if self.game is not None:
            for v in self.vehicles:
                if v.may_change_lanes and v.lc is None and self.t >= v.next_decision_t - 1e-9:
                    v.next_decision_t = self.t + self.settings.decision_cadence
                    self.game(self, v)
        if self.settings.check_collisions:
            self._check_collisions()
        self._record()

    def trajectories(self) -> dict:
        return {vid: rec.build() for vid, rec in self.recorders.items()}

    def snapshot(self) -> list:
        return [v.state() for v in self.vehicles]
