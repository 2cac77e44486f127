import dataclasses
import itertools

import numpy as np
import pytest
from scipy.optimize import brentq

from rampmerge.collision import trajectories_collide
from rampmerge.config import preset
from rampmerge.merge import VmcMode
from rampmerge.metrics import compute_metrics
from rampmerge.scenario import _params, build_scenario, label_roles, world_settings
from rampmerge.simulator import fifo_slot_leader, run_fifo, run_hcomc, trajectory_csv_text
from rampmerge.traffic_models import CavParams, idm_accel
from rampmerge.world import Kind, Lane, Role, Vehicle, World, WorldSettings


def _vehicle(cfg, vid, lane, x, v, kind=Kind.CAV, role=Role.BACKGROUND):
    idm, hdv, cav = _params(cfg)
    return Vehicle(vid, kind, lane, x, cfg.road.lane_y(lane), v, idm, hdv, cav, role=role)


def _check_invariants(res):
    cfg = res.cfg
    road = cfg.road
    a_max = max(cfg.idm.max_accel_a, cfg.control.plan_max_accel)
    centres = np.array([road.ramp_y, road.main1_y, road.main2_y])
    lengths = {len(tr) for tr in res.trajectories.values()}
    assert len(lengths) == 1  # nobody spawned or left mid-run
    for tr in res.trajectories.values():
        assert np.all(tr.v >= 0.0)
        dx = np.diff(tr.x)
        dt = np.diff(tr.t)
        assert np.all(np.abs(dx) <= (tr.v.max() + a_max * dt) * dt + 1e-9)
        off = np.min(np.abs(tr.y[:, None] - centres[None, :]), axis=1)
        assert np.all(off <= 0.5 * road.lane_width + 1e-9)


def test_hcomc_run_invariants(hcomc_run):
    assert hcomc_run.merged and hcomc_run.collision is None and not hcomc_run.forced_stop
    assert hcomc_run.plan is not None and hcomc_run.plan.feasible
    _check_invariants(hcomc_run)


def test_executed_plan_collision_free(hcomc_run):
    trs = hcomc_run.trajectories
    for a, b in itertools.combinations(sorted(trs), 2):
        assert trajectories_collide(trs[a], trs[b]) is None, (a, b)


def test_fifo_run_invariants(fifo_run):
    assert fifo_run.merged and fifo_run.collision is None
    _check_invariants(fifo_run)


def test_runs_are_deterministic(cond1, hcomc_run, fifo_run):
    assert trajectory_csv_text(run_hcomc(cond1, 0)) == trajectory_csv_text(hcomc_run)
    assert trajectory_csv_text(run_fifo(cond1, 0)) == trajectory_csv_text(fifo_run)


def test_fifo_stabilizes_no_faster_than_hcomc(hcomc_run, fifo_run):
    assert compute_metrics(fifo_run).stab_time >= compute_metrics(hcomc_run).stab_time


def test_empty_main_lanes_trivial_merge():
    cfg = preset("condition1")
    tc = cfg.traffic
    vr = _vehicle(cfg, "VR", Lane.RAMP, tc.vr_start_x, tc.ramp_speed, role=Role.VR)
    res = run_hcomc(cfg, 0, world=World(cfg.road, [vr], world_settings(cfg)))
    assert res.merged and res.collision is None
    assert res.plan.objectives.u_safe == 0.0
    assert res.plan.decision.vmc_mode == VmcMode.NO_COOPERATION


def _mainline(cfg, x0=-700.0, n=3):
    return [_vehicle(cfg, f"M{k}", Lane.MAIN1, x0 - 150.0 * k, 29.0) for k in range(n)]


def test_fifo_vr_first_leaves_mainline_alone():
    cfg = preset("condition1", metrics=preset("condition1").metrics.__class__(post_merge_horizon=5.0))
    tc = cfg.traffic

    def world(with_vr):
        vs = _mainline(cfg)
        if with_vr:
            vs.append(_vehicle(cfg, "VR", Lane.RAMP, tc.vr_start_x, tc.ramp_speed, role=Role.VR))
        return World(cfg.road, vs, world_settings(cfg))

    w = world(True)
    assert fifo_slot_leader(w, w.by_id("VR")) is None
    res = run_fifo(cfg, 0, world=w)
    assert res.merged
    assert all(tr.x[-1] < res.trajectories["VR"].x[-1] for vid, tr in res.trajectories.items() if vid != "VR")
    ref = world(False)
    n = len(res.trajectories["VR"]) - 1
    for _ in range(n):
        ref.step()
    for vid, rec in ref.recorders.items():
        mine, alone = res.trajectories[vid], rec.build()
        # IDM never fully ignores a leader, so "unaffected" means no braking and sub-metre drift
        assert np.max(np.abs(mine.a - alone.a)) < 0.05
        assert np.max(np.abs(mine.x - alone.x)) < 0.5


def test_fifo_tie_goes_to_mainline():
    cfg = preset("condition1")
    xm = cfg.road.merge_point_x
    vr = _vehicle(cfg, "VR", Lane.RAMP, xm - 200.0, 20.0, role=Role.VR)
    tie = _vehicle(cfg, "M_tie", Lane.MAIN1, xm - 300.0, 30.0)  # both 10 s out
    late = _vehicle(cfg, "M_late", Lane.MAIN1, xm - 400.0, 30.0)
    w = World(cfg.road, [vr, tie, late], world_settings(cfg))
    assert fifo_slot_leader(w, vr) == "M_tie"


def test_idm_two_car_equilibrium():
    cfg = preset("condition1")
    idm = cfg.idm
    lead = _vehicle(cfg, "L", Lane.MAIN1, 200.0, 20.0)
    lead.frozen = True
    foll = _vehicle(cfg, "F", Lane.MAIN1, 100.0, 26.0)
    foll.cav = CavParams(idm, 0.0)
    w = World(cfg.road, [lead, foll], WorldSettings(dt=0.1, record=False))
    for _ in range(3000):
        w.step()
    gap_eq = brentq(lambda s: idm_accel(s, 20.0, 0.0, idm), 1.0, 500.0, xtol=1e-12)
    assert abs(foll.speed - 20.0) < 1e-3
    assert w.gap(foll, lead) == pytest.approx(gap_eq, rel=0.01)


def _platoon_world(dt, accelerating=False):
    cfg = preset("condition1")
    if accelerating:
        kinds = (Kind.CAV, Kind.HDV, Kind.CAV, Kind.HDV)
        vs = [_vehicle(cfg, f"P{k}", Lane.MAIN1, 300.0 - 35.0 * k, 15.0 + 2.0 * k, kind)
              for k, kind in enumerate(kinds)]
    else:
        # the condition-1 mainline traffic, both lanes, jittered headways and mixed kinds
        vs = [v for v in build_scenario(cfg, 0, record=False).vehicles if v.lane != Lane.RAMP]
    return World(cfg.road, vs, WorldSettings(dt=dt, decel_limit=cfg.control.decel_limit, record=False))


def _drift(dt_coarse, dt_fine, accelerating=False):
    coarse, fine = _platoon_world(dt_coarse, accelerating), _platoon_world(dt_fine, accelerating)
    for _ in range(int(round(60.0 / dt_coarse))):
        coarse.step()
    for _ in range(int(round(60.0 / dt_fine))):
        fine.step()
    return max(abs(a.x - b.x) for a, b in zip(coarse.vehicles, fine.vehicles))


def test_dt_refinement_drift():
    assert _drift(0.1, 0.01) < 0.5


def test_dt_refinement_is_first_order():
    # a 15 -> 30 m/s acceleration leaves about dv * dt / 2 of position lag at dt = 0.1
    d1, d2 = _drift(0.1, 0.005, True), _drift(0.05, 0.005, True)
    assert 1.7 < d1 / d2 < 2.3
    assert d1 < 15.0 * 0.1


def test_single_free_vehicle_at_desired_speed():
    cfg = preset("condition1")
    v0 = cfg.idm.desired_speed_v0
    car = _vehicle(cfg, "A", Lane.MAIN2, 0.0, v0)
    w = World(cfg.road, [car], WorldSettings(dt=0.1))
    for _ in range(50):
        w.step()
    assert car.speed == v0 and car.accel == 0.0
    assert car.x == pytest.approx(5.0 * v0)
    assert car.y == cfg.road.main2_y and car.lane == Lane.MAIN2


def test_dense_lane_one_selects_lateral_cooperation():
    base = preset("condition1", cav_penetration=1.0)
    # no background lane changes, so lane 1 stays packed until VR plans
    cfg = base.with_(game=dataclasses.replace(base.game, enabled=False))
    vs = [_vehicle(cfg, "VR", Lane.RAMP, cfg.road.control_zone_start_x, 20.0, role=Role.VR)]
    vs += [_vehicle(cfg, f"M{k}", Lane.MAIN1, 160.0 + 30.0 * (k - 4), 22.0) for k in range(8)]
    w = World(cfg.road, vs, world_settings(cfg))
    label_roles(w)
    res = run_hcomc(cfg, 0, world=w)
    assert res.plan.decision.vmc_mode == VmcMode.LATERAL
    modes = {p.decision.vmc_mode for p in res.pareto if p.feasible}
    assert VmcMode.LATERAL in modes
    vmc = next(i for i, r in res.roles.items() if r == "VMC")
    assert any(e[1] == "lane_change_start" and e[2] == vmc and e[3] == "Main2" for e in res.events)
    assert res.merged and res.collision is None
