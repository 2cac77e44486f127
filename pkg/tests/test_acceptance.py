"""Acceptance criteria 1-10. Each test records one PASS/FAIL line, printed after the run
under "acceptance criteria". Tolerances and time limits are pinned here."""

import dataclasses
import itertools
import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import ACCEPTANCE
from oracles import rect_corners, sampled_collision, sat_overlap_many
from rampmerge.cli import ExperimentGrid, compare_optimizers, run_experiment
from rampmerge.collision import VehicleFootprint, footprints_collide, trajectories_collide
from rampmerge.config import PRESETS, preset
from rampmerge.metrics import compute_metrics
from rampmerge.objectives import scalarized_cost, select_unique
from rampmerge.optimizer import dominates, grid_search, non_dominated_sort, nsga2_run, pso_run, sa_run
from rampmerge.planning import solve_cubic_bvp
from rampmerge.simulator import planning_scene, run_fifo, run_hcomc
from rampmerge.world import Lane, World, WorldSettings
from rampmerge.traffic_models import (CavParams, HdvParams, IdmParams, StateHistory, cav_accel, fit_quintic,
                                      hdv_accel, idm_accel)
from test_collision import collision_corpus
from test_objectives import oracle_select, random_set
from test_optimizer import _plans
from test_simulator import _drift, _vehicle

SEEDS = range(10)
CRIT8_LIMIT = 600.0
CRIT9_LIMIT = 300.0


def record(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def _brute_fronts_vec(F):
    """Layer peeling with a full n x n dominance matrix."""
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[j, i]: j dominates i
    left = np.ones(len(F), bool)
    fronts = []
    while left.any():
        beaten = (dom & left[:, None]).any(axis=0)
        front = np.flatnonzero(left & ~beaten)
        fronts.append(front.tolist())
        left[front] = False
    return fronts


def test_criterion_1_non_dominated_sort():
    rng = np.random.default_rng(1)
    sizes = np.linspace(2, 500, 100).astype(int)
    spent, mismatches = 0.0, 0
    for k, n in enumerate(sizes):
        F = rng.random((n, 3)) if k % 3 else rng.integers(0, 6, (n, 3)).astype(float)  # every third has ties
        plans = _plans(F)
        t = time.perf_counter()
        fronts = non_dominated_sort(plans)
        spent += time.perf_counter() - t
        index = {id(p): i for i, p in enumerate(plans)}
        got = [sorted(index[id(p)] for p in f) for f in fronts]
        mismatches += got != _brute_fronts_vec(F)
    ok = mismatches == 0 and spent < 5.0
    record(1, ok, f"{mismatches} mismatches in 100 instances (n 2..500), sort time {spent:.2f} s < 5 s")
    assert ok


def test_criterion_2_collision():
    rng = np.random.default_rng(2)
    t = time.perf_counter()
    n = 10_000
    P = np.column_stack([rng.uniform(-8, 8, (n, 2)), rng.uniform(-math.pi, math.pi, n),
                         rng.uniform(0.5, 8, (n, 2))])
    Q = np.column_stack([rng.uniform(-8, 8, (n, 2)), rng.uniform(-math.pi, math.pi, n),
                         rng.uniform(0.5, 8, (n, 2))])
    A = np.array([rect_corners(*p) for p in P])
    B = np.array([rect_corners(*q) for q in Q])
    expect = sat_overlap_many(A, B)
    got = np.array([footprints_collide(VehicleFootprint((p[0], p[1]), p[2], p[3], p[4]),
                                       VehicleFootprint((q[0], q[1]), q[2], q[3], q[4])) for p, q in zip(P, Q)])
    rect_bad = int(np.sum(got != expect))
    traj_bad = 0
    for a, b in collision_corpus():
        hit = trajectories_collide(a.trajectory(0.0, 8.0, 0.1), b.trajectory(0.0, 8.0, 0.1)) is not None
        traj_bad += hit != sampled_collision(a, b, 0.0, 8.0, 0.001)
    spent = time.perf_counter() - t
    ok = rect_bad == 0 and traj_bad == 0 and spent < 10.0
    record(2, ok, f"{rect_bad}/10000 rectangle and {traj_bad}/50 trajectory disagreements "
                  f"({int(expect.sum())} overlapping pairs), {spent:.1f} s < 10 s")
    assert ok


def test_criterion_3_boundary_values():
    rng = np.random.default_rng(3)
    t = time.perf_counter()
    worst_cubic = worst_quintic = 0.0
    for _ in range(10_000):
        x0, xf = rng.uniform(-500, 500, 2)
        v0, vf = rng.uniform(0, 40, 2)
        t0 = rng.uniform(-50, 50)
        tf = t0 + rng.uniform(0.5, 30)
        m = solve_cubic_bvp(x0, v0, xf, vf, t0, tf)
        res = max(abs(m.position(t0) - x0), abs(m.velocity(t0) - v0),
                  abs(m.position(tf) - xf), abs(m.velocity(tf) - vf))
        worst_cubic = max(worst_cubic, float(res))
        a = rng.uniform(-500, 500)
        b = a + rng.uniform(5, 200)
        d = rng.choice([-1, 1]) * rng.uniform(0.5, 8)
        p = fit_quintic(a, b, d)
        res = max(abs(p(a)), abs(p(b) - d), abs(p.slope(a)), abs(p.slope(b)),
                  abs(p.curvature(a)), abs(p.curvature(b)))
        worst_quintic = max(worst_quintic, float(res))
    spent = time.perf_counter() - t
    ok = worst_cubic < 1e-9 and worst_quintic < 1e-9 and spent < 2.0
    record(3, ok, f"max residual cubic {worst_cubic:.1e}, quintic {worst_quintic:.1e} (< 1e-9), {spent:.2f} s < 2 s")
    assert ok


def test_criterion_4_model_reductions():
    rng = np.random.default_rng(4)
    p = IdmParams()
    hdv = HdvParams(p, 0.0, 0.0, 0.0, 1.0, 1.0)
    cav = CavParams(p, 0.0)
    bad_h = bad_c = 0
    for _ in range(10_000):
        gap, v, dv, al = rng.uniform(0.5, 300), rng.uniform(0, 40), rng.uniform(-15, 15), rng.uniform(-6, 3)
        h = StateHistory(5.0)
        h.append(0.0, gap, v, dv)
        ref = idm_accel(gap, v, dv, p)
        bad_h += hdv_accel(h, 0.0, hdv) != ref
        bad_c += cav_accel(gap, v, dv, al, cav) != ref
    ok = bad_h == 0 and bad_c == 0
    record(4, ok, f"bit-exact mismatches over 10000 inputs: HDV {bad_h}, CAV {bad_c}")
    assert ok


def test_criterion_5_selector():
    rng = np.random.default_rng(5)
    bad = 0
    straddled = 0
    for k in range(200):
        plans = random_set(rng, int(rng.integers(2, 15)), straddle=k % 4 != 0)
        s = [p.objectives.u_safe for p in plans]
        straddled += min(s) <= 4.0 < max(s)
        bad += select_unique(plans, 4.0) is not oracle_select(plans, 4.0)
    ok = bad == 0
    record(5, ok, f"{bad}/200 disagreements with the hand-executed rule ({straddled} sets straddle U_safe = 4)")
    assert ok


def test_criterion_6_grid_optimality():
    base = preset("condition1")
    cfg = base.with_(decision=dataclasses.replace(base.decision, time_step=1.0))
    scene = planning_scene(cfg, 0)
    t = time.perf_counter()
    grid = grid_search(scene)
    feas = [p for p in grid if p.feasible]
    front = [p for p in nsga2_run(scene, cfg.ga) if p.feasible]
    dominated = sum(any(dominates(g.minimized(), p.minimized()) for g in feas) for p in front)
    o = cfg.objectives

    def cost(p):
        return scalarized_cost(p.objectives, o.bounds, p.feasible, o.safety_threshold)

    best = min(cost(p) for p in grid)
    c_pso, c_sa = cost(pso_run(scene, cfg.pso)), cost(sa_run(scene, cfg.sa))
    spent = time.perf_counter() - t
    within = all(c <= best + 0.05 * abs(best) for c in (c_pso, c_sa))
    ok = len(grid) <= 64 and len(feas) > 0 and len(front) > 0 and dominated == 0 and within and spent < 60
    record(6, ok, f"{len(grid)} cells ({len(feas)} feasible); {dominated}/{len(front)} NSGA-II front plans dominated "
                  f"by the grid; cost grid {best:.4f}, PSO {c_pso:.4f}, SA {c_sa:.4f} (<= +5%); {spent:.1f} s < 60 s")
    assert ok


def test_criterion_7_determinism(tmp_path):
    grid = ExperimentGrid.build(["condition1", "condition3"], ["hcomc", "fifo"], ["nsga2", "pso"], [2])
    run_experiment(grid, tmp_path / "a", use_env=False)
    run_experiment(grid, tmp_path / "b", use_env=False)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    differ = [n for n in names if (tmp_path / "a" / n).read_bytes() != (tmp_path / "b" / n).read_bytes()]
    ok = not differ and len(names) == len(grid.cells) + 1
    record(7, ok, f"{len(names)} CSVs from {len(grid.cells)} cells, {len(differ)} differ between reruns")
    assert ok


@pytest.fixture(scope="module")
def condition_grid():
    """Every preset x {HCOMC, FIFO} x 10 seeds; metrics plus per-run invariant checks."""
    t = time.perf_counter()
    metrics, checks = {}, []
    for cond, seed in itertools.product(PRESETS, SEEDS):
        cfg = preset(cond)
        for name, fn in (("hcomc", run_hcomc), ("fifo", run_fifo)):
            res = fn(cfg, seed)
            metrics.setdefault((cond, name), []).append(compute_metrics(res))
            checks.append((cond, name, seed, _invariants(res)))
    return metrics, checks, time.perf_counter() - t


def _invariants(res):
    trs = res.trajectories
    hits = [(a, b) for a, b in itertools.combinations(sorted(trs), 2)
            if trajectories_collide(trs[a], trs[b]) is not None]
    return {"collision": res.collision is not None or bool(hits),
            "min_speed": min(float(tr.v.min()) for tr in trs.values()),
            "planned": res.plan is not None}


def test_criterion_8_hcomc_vs_fifo(condition_grid):
    metrics, _, spent = condition_grid
    lines, both = [], 0
    for cond in PRESETS:
        h, f = metrics[(cond, "hcomc")], metrics[(cond, "fifo")]
        crit_h, crit_f = (np.nanmean([r.crit_dist for r in rs]) for rs in (h, f))
        stab_h, stab_f = (np.nanmean([r.stab_time for r in rs]) for rs in (h, f))
        win = crit_h > crit_f and stab_h < stab_f
        both += win
        lines.append(f"{cond} Crit {crit_h:.1f}/{crit_f:.1f} Stab {stab_h:.2f}/{stab_f:.2f}")
    ok = both >= 4 and spent < CRIT8_LIMIT
    record(8, ok, f"HCOMC beats FIFO on both in {both}/5 conditions (need 4); {spent:.0f} s < {CRIT8_LIMIT:.0f} s; "
                  f"HCOMC/FIFO means: " + "; ".join(lines))
    assert ok


def test_criterion_9_optimizer_costs():
    t = time.perf_counter()
    table = compare_optimizers("condition1", list(SEEDS), full_runs=False, use_env=False)
    spent = time.perf_counter() - t
    mean = {s.optimizer: s.mean_cost for s in table}
    ok = mean["nsga2"] <= mean["pso"] and mean["nsga2"] <= mean["sa"] and spent < CRIT9_LIMIT
    record(9, ok, f"mean scalarized cost NSGA-II {mean['nsga2']:.6f}, PSO {mean['pso']:.6f}, "
                  f"SA {mean['sa']:.6f} over 10 paired seeds; {spent:.0f} s < {CRIT9_LIMIT:.0f} s")
    assert ok


def test_criterion_10_physical_invariants(condition_grid):
    _, checks, _ = condition_grid
    hcomc = [c for c in checks if c[1] == "hcomc"]
    unsafe = [c[:3] for c in hcomc if c[3]["planned"] and c[3]["collision"]]
    negative = [c[:3] for c in checks if c[3]["min_speed"] < 0]
    # two-car equilibrium against the numerically solved IDM root
    cfg = preset("condition1")
    worst_gap = 0.0
    for v_lead in (10.0, 20.0, 25.0):
        lead = _vehicle(cfg, "L", Lane.MAIN1, 300.0, v_lead)
        lead.frozen = True
        foll = _vehicle(cfg, "F", Lane.MAIN1, 200.0, v_lead + 4.0)
        foll.cav = CavParams(cfg.idm, 0.0)
        w = World(cfg.road, [lead, foll], WorldSettings(dt=cfg.dt, record=False))
        for _ in range(4000):
            w.step()
        root = brentq(lambda s: idm_accel(s, v_lead, 0.0, cfg.idm), 0.5, 1000.0, xtol=1e-12)
        worst_gap = max(worst_gap, abs(w.gap(foll, lead) - root) / root)
    drift = _drift(0.1, 0.01)
    ok = not unsafe and not negative and worst_gap < 0.01 and drift < 0.5
    record(10, ok, f"{len(unsafe)} colliding executed plans in {len(hcomc)} HCOMC runs; "
                   f"{len(negative)} runs with v < 0; equilibrium gap error {100 * worst_gap:.3f}% < 1%; "
                   f"dt drift {drift:.3f} m < 0.5 m")
    assert ok
