"""Scenario construction: mainline platoons, the ramp vehicle, key-role labelling and
the background lane-change hook."""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .config import ConfigError, ScenarioConfig
from .game_decision import Agent, FvTypeDistribution, LaneChangeScene, PayoffWeights, SvAction, sv_decide
from .traffic_models import CavParams, HdvParams, IdmParams, free_accel, idm_accel, idm_equilibrium_gap
from .world import KEY_ROLES, Kind, Lane, Role, Vehicle, World, WorldSettings


def equilibrium_speed(headway: float, length: float, p: IdmParams) -> float:
    """Stationary platoon speed for front-to-front time headway ``headway``.

    Solves ``headway * v - length = s_e(v)`` with ``s_e`` the IDM equilibrium gap; the
    upper root is the stable branch. Raises :class:`ConfigError` when no spacing fits.
    """
    v0 = p.desired_speed_v0

    def slack(v):
        return headway * v - length - idm_equilibrium_gap(v, p)

    hi = v0 * (1.0 - 1e-9)
    best = minimize_scalar(lambda v: -slack(v), bounds=(0.0, hi), method="bounded",
                           options={"xatol": 1e-10})
    if not -best.fun > 0:
        raise ConfigError("headway_main1", f"headway {headway} s too small to fit {length} m vehicles")
    return float(brentq(slack, best.x, hi, xtol=1e-12))


def _params(cfg: ScenarioConfig):
    idm = cfg.idm
    h = cfg.hdv
    hdv = HdvParams(idm, h.tau_gap, h.tau_speed, h.tau_dspeed, h.gap_error_factor, h.dspeed_error_factor)
    cav = CavParams(idm, cfg.cav.cooling_factor_c)
    return idm, hdv, cav


def world_settings(cfg: ScenarioConfig, record: bool = True) -> WorldSettings:
    return WorldSettings(dt=cfg.dt, decel_limit=cfg.control.decel_limit,
                         lc_duration_hdv=cfg.lane_change.duration_hdv,
                         lc_duration_cav=cfg.lane_change.duration_cav,
                         record=record, decision_cadence=cfg.game.cadence,
                         lane_change_threshold=cfg.game.intention_threshold,
                         enable_game=cfg.game.enabled)


def merge_eta(world: World, vr: Vehicle, v_main: float) -> float:
    """Rough arrival time of VR at the merge point, averaging ramp and mainline speeds."""
    dist = world.road.merge_point_x - vr.x
    return max(dist, 0.0) / max(0.5 * (vr.speed + v_main), 1.0)


def label_roles(world: World) -> None:
    """Assign the six key roles from constant-speed projections to VR's merge time.

    VMC is the lane-1 vehicle nearest the merge point at that time; VMF/VMR are its
    lane-1 neighbours and VNF/VNR the lane-2 vehicles bracketing VMC.
    """
    vr = next(v for v in world.vehicles if v.lane == Lane.RAMP)
    main1 = [v for v in world.vehicles if v.lane == Lane.MAIN1 and v.lc is None]
    main2 = [v for v in world.vehicles if v.lane == Lane.MAIN2 and v.lc is None]
    for v in world.vehicles:
        v.role = Role.BACKGROUND
    vr.role = Role.VR
    if not main1:
        return
    v_main = float(np.mean([v.speed for v in main1]))
    ts = merge_eta(world, vr, v_main)
    xm = world.road.merge_point_x
    proj = {v.id: v.x + v.speed * ts for v in world.vehicles}
    order1 = sorted(main1, key=lambda v: proj[v.id])
    vmc = min(order1, key=lambda v: (abs(proj[v.id] - xm), v.id))
    vmc.role = Role.VMC
    i = order1.index(vmc)
    if i + 1 < len(order1):
        order1[i + 1].role = Role.VMF
    if i > 0:
        order1[i - 1].role = Role.VMR
    ahead = [v for v in main2 if v.x >= vmc.x]
    behind = [v for v in main2 if v.x < vmc.x]
    if ahead:
        min(ahead, key=lambda v: v.x).role = Role.VNF
    if behind:
        max(behind, key=lambda v: v.x).role = Role.VNR
    for v in world.vehicles:
        v.may_change_lanes = v.role == Role.BACKGROUND and v.lane != Lane.RAMP


def _platoon(lane: Lane, headway: float, v_eq: float, cfg: ScenarioConfig, rng, t_star: float,
             prefix: str, params) -> list:
    idm, hdv, cav = params
    tc = cfg.traffic
    n = tc.vehicles_per_lane
    spacing = headway * v_eq
    steps = spacing * (1.0 + tc.headway_jitter * rng.uniform(-1.0, 1.0, size=n - 1))
    # positions at the projected merge time, centred on the merge point
    rel = np.concatenate([[0.0], np.cumsum(steps)])
    k_mid = n // 2
    phase = rng.uniform(0.0, spacing)
    at_merge = cfg.road.merge_point_x + phase + rel - rel[k_mid]
    kinds = rng.random(n) < cfg.cav_penetration
    y = cfg.road.lane_y(lane)
    out = []
    for k in range(n):
        kind = Kind.CAV if kinds[k] else Kind.HDV
        x0 = float(at_merge[k] - v_eq * t_star)
        out.append(Vehicle(f"{prefix}{k:02d}", kind, lane, x0, y, v_eq, idm, hdv, cav,
                           tc.vehicle_length, tc.vehicle_width))
    return out


def build_scenario(cfg: ScenarioConfig, seed: int | None = None, record: bool = True) -> World:
    """Spawn both main-lane platoons and VR, assign kinds by penetration and label roles."""
    seed = cfg.seed if seed is None else seed
    params = _params(cfg)
    idm = params[0]
    tc = cfg.traffic
    v1 = _eq_speed(cfg.headway_main1, tc.vehicle_length, idm, "headway_main1")
    v2 = _eq_speed(cfg.headway_main2, tc.vehicle_length, idm, "headway_main2")
    xm = cfg.road.merge_point_x
    t_star = (xm - tc.vr_start_x) / (0.5 * (tc.ramp_speed + v1))
    # separate streams per lane so changing one lane's settings leaves the other intact
    r1, r2 = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    lane1 = _platoon(Lane.MAIN1, cfg.headway_main1, v1, cfg, r1, t_star, "M1_", params)
    lane2 = _platoon(Lane.MAIN2, cfg.headway_main2, v2, cfg, r2, t_star, "M2_", params)
    _, hdv, cav = params
    vr = Vehicle("VR", Kind.CAV, Lane.RAMP, tc.vr_start_x, cfg.road.ramp_y, tc.ramp_speed,
                 idm, hdv, cav, tc.vehicle_length, tc.vehicle_width, Role.VR)
    vehicles = lane1 + lane2 + [vr]
    world = World(cfg.road, vehicles, world_settings(cfg, record))
    label_roles(world)
    return world


def _eq_speed(headway, length, p, key):
    try:
        return equilibrium_speed(headway, length, p)
    except ConfigError as exc:
        raise ConfigError(key, str(exc).split(": ", 1)[-1]) from None


def key_vehicles(world: World) -> dict:
    return {r: world.by_role(r) for r in KEY_ROLES}


# -- background discretionary lane changes --------------------------------------------

def _agent(v: Vehicle | None) -> Agent | None:
    if v is None:
        return None
    return Agent(v.x, v.speed, v.idm, v.length)


def _lane_gain(world: World, v: Vehicle, lane: Lane) -> float:
    lead = world.leader(v, lane)
    if lead is None:
        return free_accel(v.speed, v.idm)
    gap = world.gap(v, lead)
    if gap <= 0:
        return -world.settings.decel_limit
    return idm_accel(gap, v.speed, v.speed - lead.speed, v.idm, world.settings.decel_limit)


class BackgroundGame:
    """World hook: a background vehicle that sees enough advantage in the other main lane
    plays the lane-change game against that lane's follower and changes on CHANGE_LANE."""

    def __init__(self, cfg: ScenarioConfig):
        g = cfg.game
        self.dist = FvTypeDistribution(g.fv_aggressive, g.fv_normal, g.fv_conservative)
        self.weights = PayoffWeights(safe=g.w_safe, eff=g.w_eff, comf=g.w_comf,
                                     collision_penalty=g.collision_penalty, eta=cfg.objectives.eta,
                                     horizon=g.horizon, lc_duration=cfg.lane_change.duration_hdv,
                                     safety=cfg.safety)
        self.threshold = g.intention_threshold
        self.decisions = 0

    def __call__(self, world: World, v: Vehicle) -> bool:
        if v.lane not in (Lane.MAIN1, Lane.MAIN2):
            return False
        target = Lane.MAIN2 if v.lane == Lane.MAIN1 else Lane.MAIN1
        if _lane_gain(world, v, target) - _lane_gain(world, v, v.lane) <= self.threshold:
            return False
        fv = world.follower(v, target)
        if fv is not None and (fv.role != Role.BACKGROUND or fv.lc is not None):
            return False  # never press a key vehicle or one mid-manoeuvre
        lead_t = world.leader(v, target)
        if lead_t is not None and lead_t.role == Role.VR:
            return False
        scene = LaneChangeScene(_agent(v), _agent(fv), _agent(world.leader(v, v.lane)),
                                _agent(lead_t), _agent(world.follower(v, v.lane)))
        weights = dataclasses.replace(self.weights, lc_duration=world.lc_duration(v))
        self.decisions += 1
        if sv_decide(scene, self.dist, weights).sv_action != SvAction.CHANGE_LANE:
            return False
        world.start_lane_change(v, target, world.lc_duration(v))
        return True


def attach_background_game(world: World, cfg: ScenarioConfig) -> None:
    if cfg.game.enabled:
        world.game = BackgroundGame(cfg)
