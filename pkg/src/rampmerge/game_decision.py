"""Discretionary lane-change decision as a leader/follower game.

The subject vehicle (SV) commits to changing lanes or staying; the follower in the
target lane (FV) best-responds according to its (unknown) driving style. SV minimizes
its cost in expectation over the style distribution.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .objectives import InfeasibleGapError, SafetyParams, u_safe
from .planning import TransitionBlend, blended_accel
from .traffic_models import IdmParams, free_accel, idm_accel


class SvAction(enum.IntEnum):
    CHANGE_LANE = 0
    KEEP_FOLLOWING = 1


class FvAction(enum.IntEnum):
    CHANGE_LANE = 0
    CONSTANT_SPEED = 1
    ACCELERATE = 2
    DECELERATE = 3


FV_TYPES = ("aggressive", "normal", "conservative")

# (headway scale, max-accel scale) per driving style
STYLE_SCALING = {
    "aggressive": (0.7, 1.3),
    "normal": (1.0, 1.0),
    "conservative": (1.4, 0.8),
}


@dataclass(frozen=True)
class ActionProfile:
    sv_action: SvAction
    fv_action: FvAction


@dataclass(frozen=True)
class FvTypeDistribution:
    aggressive: float = 0.2
    normal: float = 0.6
    conservative: float = 0.2

    def __post_init__(self):
        ps = self.as_array()
        if np.any(ps < 0) or np.any(ps > 1) or abs(ps.sum() - 1.0) > 1e-9:
            raise ValueError(f"not a probability distribution: {tuple(ps)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.aggressive, self.normal, self.conservative], dtype=float)

    @classmethod
    def point(cls, style: str) -> "FvTypeDistribution":
        return cls(**{k: float(k == style) for k in FV_TYPES})


@dataclass(frozen=True)
class Agent:
    x: float
    speed: float
    params: IdmParams = IdmParams()
    length: float = 5.0


@dataclass(frozen=True)
class LaneChangeScene:
    """Local snapshot around SV. ``fv`` and ``target_leader`` live in the target lane,
    ``sv_leader`` and ``sv_follower`` in SV's current lane."""

    sv: Agent
    fv: Optional[Agent] = None
    sv_leader: Optional[Agent] = None
    target_leader: Optional[Agent] = None
    sv_follower: Optional[Agent] = None


@dataclass(frozen=True)
class PayoffWeights:
    safe: float = 1.0
    eff: float = 0.5
    comf: float = 0.2
    collision_penalty: float = 1e4
    infeasible_gap_term: float = 100.0
    eta: float = 0.3
    horizon: float = 5.0
    dt: float = 0.2
    lc_duration: float = 4.0
    safety: SafetyParams = SafetyParams()


class Payoff(NamedTuple):
    sv: float
    fv: float


CUR, TGT = 0, 1


@dataclass
class _Body:
    name: str
    x: float
    v: float
    length: float
    params: IdmParams
    lanes: set = field(default_factory=set)
    accels: list = field(default_factory=list)


def _leader(body, bodies, lane):
    best = None
    for o in bodies:
        if o is body or lane not in o.lanes or o.x <= body.x:
            continue
        if best is None or o.x < best.x:
            best = o
    return best


def _follower(body, bodies, lane):
    best = None
    for o in bodies:
        if o is body or lane not in o.lanes or o.x >= body.x:
            continue
        if best is None or o.x > best.x:
            best = o
    return best


def _model_accel(body, leader) -> float:
    if leader is None:
        return free_accel(body.v, body.params)
    gap = leader.x - body.x - 0.5 * (leader.length + body.length)
    if gap <= 0:
        return -6.0
    return idm_accel(gap, body.v, body.v - leader.v, body.params)


def _situation_accel(body, bodies) -> float:
    lanes = body.lanes
    return min(_model_accel(body, _leader(body, bodies, ln)) for ln in lanes)


def _critical(rear, front, safety: SafetyParams, cap: float) -> float:
    gap = front.x - rear.x - 0.5 * (front.length + rear.length)
    if gap <= 0:
        return cap
    try:
        return u_safe(rear.v, front.v, gap, safety)
    except InfeasibleGapError:
        return cap


def rollout_payoff(scene: LaneChangeScene, profile: ActionProfile, fv_type: str,
                   horizon: float | None = None, weights: PayoffWeights = PayoffWeights()) -> Payoff:
    """Simulate one action pair for a short horizon and score it for both players (lower is better)."""
    horizon = weights.horizon if horizon is None else horizon
    h_scale, a_scale = STYLE_SCALING[fv_type]
    dt = weights.dt
    n = int(round(horizon / dt))

    def body(name, ag, lanes):
        return None if ag is None else _Body(name, ag.x, ag.speed, ag.length, ag.params, set(lanes))

    sv = body("sv", scene.sv, {CUR})
    fv = None
    if scene.fv is not None:
        fv = _Body("fv", scene.fv.x, scene.fv.speed, scene.fv.length,
                   scene.fv.params.scaled(h_scale, a_scale), {TGT})
    cl = body("cl", scene.sv_leader, {CUR})
    tl = body("tl", scene.target_leader, {TGT})
    cf = body("cf", scene.sv_follower, {CUR})
    bodies = [b for b in (sv, fv, cl, tl, cf) if b is not None]

    t_lc = weights.lc_duration
    blend = TransitionBlend.over(0.0, t_lc)
    sv_changes = profile.sv_action == SvAction.CHANGE_LANE
    fv_changes = fv is not None and profile.fv_action == FvAction.CHANGE_LANE

    a0 = {b.name: _situation_accel(b, bodies) for b in bodies}
    collided = {b.name: False for b in bodies}

    for k in range(n):
        t = k * dt
        if sv_changes:
            sv.lanes = {CUR, TGT} if t < t_lc else {TGT}
        if fv_changes:
            fv.lanes = {CUR, TGT} if t < t_lc else {CUR}
        acc = {}
        for b in bodies:
            if b is cl or b is tl:
                acc[b.name] = 0.0
            elif b is sv:
                a_ori = _model_accel(sv, _leader(sv, bodies, CUR))
                if sv_changes and t < t_lc:
                    a_new = _model_accel(sv, _leader(sv, bodies, TGT))
                    acc["sv"] = blended_accel(a_ori, a_new, t, blend)
                elif sv_changes:
                    acc["sv"] = _model_accel(sv, _leader(sv, bodies, TGT))
                else:
                    acc["sv"] = a_ori
            elif b is fv:
                act = profile.fv_action
                if act == FvAction.ACCELERATE:
                    acc["fv"] = fv.params.max_accel_a
                elif act == FvAction.DECELERATE:
                    acc["fv"] = -fv.params.comfort_decel_b
                else:
                    acc["fv"] = 0.0
            else:
                acc[b.name] = _situation_accel(b, bodies)
        for b in bodies:
            a = acc[b.name]
            v_new = max(0.0, b.v + a * dt)
            b.accels.append((v_new - b.v) / dt)
            b.v = v_new
            b.x += v_new * dt
        for p, q in itertools.combinations(bodies, 2):
            if p.lanes & q.lanes and abs(p.x - q.x) < 0.5 * (p.length + q.length):
                collided[p.name] = collided[q.name] = True

    def player_cost(b, incentive, safety: SafetyParams):
        crit = 0.0
        for ln in b.lanes:
            lead = _leader(b, bodies, ln)
            if lead is not None:
                crit = max(crit, _critical(b, lead, safety, weights.infeasible_gap_term))
            foll = _follower(b, bodies, ln)
            if foll is not None:
                crit = max(crit, _critical(foll, b, safety, weights.infeasible_gap_term))
        comfort = float(np.mean(np.square(b.accels))) if b.accels else 0.0
        safe_term = weights.collision_penalty * float(collided[b.name]) + crit
        return weights.safe * safe_term - weights.eff * incentive + weights.comf * comfort

    a1 = {b.name: _situation_accel(b, bodies) for b in bodies}
    gain_sv = a1["sv"] - a0["sv"]
    gain_fv = (a1["fv"] - a0["fv"]) if fv is not None else 0.0
    sv_cost = player_cost(sv, gain_sv + weights.eta * gain_fv, weights.safety)
    if fv is None:
        return Payoff(sv_cost, 0.0)
    fv_safety = SafetyParams(weights.safety.delay_T * h_scale, weights.safety.emergency_decel_a_merg,
                             weights.safety.min_distance_D)
    return Payoff(sv_cost, player_cost(fv, gain_fv, fv_safety))


def payoff_tensors(scene: LaneChangeScene, weights: PayoffWeights = PayoffWeights()):
    """SV and FV cost tensors indexed [sv_action, fv_action, fv_type]."""
    sv_t = np.zeros((len(SvAction), len(FvAction), len(FV_TYPES)))
    fv_t = np.zeros_like(sv_t)
    for s, f, (k, style) in itertools.product(SvAction, FvAction, enumerate(FV_TYPES)):
        if scene.fv is None and f != FvAction.CONSTANT_SPEED:
            continue
        pay = rollout_payoff(scene, ActionProfile(s, f), style, weights=weights)
        sv_t[s, f, k], fv_t[s, f, k] = pay
    if scene.fv is None:
        # FV absent: every FV action is the same non-event
        for f in FvAction:
            sv_t[:, f, :] = sv_t[:, FvAction.CONSTANT_SPEED, :]
            fv_t[:, f, :] = fv_t[:, FvAction.CONSTANT_SPEED, :]
    return sv_t, fv_t


@dataclass(frozen=True)
class Decision:
    sv_action: SvAction
    fv_response: dict  # style -> FvAction, under the chosen SV action
    expected_cost: tuple  # indexed by SvAction


def solve_stackelberg(sv_costs: np.ndarray, fv_costs: np.ndarray, probs) -> Decision:
    """Pure-strategy leader/follower solution with follower types.

    For each SV action and FV style, FV picks its cheapest action (lowest index on ties);
    SV then minimizes its expected cost. Equal expectations resolve to KEEP_FOLLOWING.
    """
    probs = np.asarray(probs, dtype=float)
    expected = []
    responses = []
    for s in SvAction:
        resp = {}
        total = 0.0
        for k, style in enumerate(FV_TYPES):
            f = int(np.argmin(fv_costs[s, :, k]))
            resp[style] = FvAction(f)
            total += probs[k] * sv_costs[s, f, k]
        expected.append(total)
        responses.append(resp)
    change, keep = expected[SvAction.CHANGE_LANE], expected[SvAction.KEEP_FOLLOWING]
    choice = SvAction.CHANGE_LANE if change < keep else SvAction.KEEP_FOLLOWING
    return Decision(choice, responses[choice], tuple(expected))


def sv_decide(scene: LaneChangeScene, dist: FvTypeDistribution = FvTypeDistribution(),
              weights: PayoffWeights = PayoffWeights()) -> Decision:
    sv_t, fv_t = payoff_tensors(scene, weights)
    return solve_stackelberg(sv_t, fv_t, dist.as_array())


def mixed_equilibrium(sv_costs: np.ndarray, fv_costs: np.ndarray):
    """Mixed Nash equilibrium of a bimatrix cost game by support enumeration.

    ``sv_costs`` and ``fv_costs`` are (m, n) matrices. Returns ``(p, q)``, the first
    equilibrium found scanning supports by size. Intended for the small 2x4 game here.
    """
    A, B = -np.asarray(sv_costs, float), -np.asarray(fv_costs, float)  # payoffs
    m, n = A.shape
    tol = 1e-9
    for size in range(1, min(m, n) + 1):
        for I in itertools.combinations(range(m), size):
            for J in itertools.combinations(range(n), size):
                q = _indifferent(A[np.ix_(I, J)], size)
                p = _indifferent(B[np.ix_(I, J)].T, size)
                if p is None or q is None:
                    continue
                P = np.zeros(m)
                P[list(I)] = p
                Q = np.zeros(n)
                Q[list(J)] = q
                row_pay = A @ Q
                col_pay = P @ B
                if row_pay.max() <= row_pay[list(I)].min() + tol and \
                        col_pay.max() <= col_pay[list(J)].min() + tol:
                    return P, Q
    raise RuntimeError("no equilibrium found (degenerate game)")


def _indifferent(M: np.ndarray, size: int):
    """Opponent mixture over the columns of ``M`` making every row pay the same."""
    if size == 1:
        return np.ones(1)
    lhs = np.vstack([M[:-1] - M[1:], np.ones(size)])
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        x = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    if np.any(x < -1e-12):
        return None
    return np.clip(x, 0.0, None)
