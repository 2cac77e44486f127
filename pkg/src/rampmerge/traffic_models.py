"""Car-following and lane-change models for human-driven (HDV) and automated (CAV) vehicles.

Speed difference convention everywhere: ``dspeed = v_follower - v_leader`` (positive when closing in).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .trajectory import Trajectory

B_EMERGENCY = 6.0  # m/s^2, default lower clamp on any model acceleration


class DomainError(ValueError):
    """Model evaluated outside its domain (e.g. non-positive gap)."""


@dataclass(frozen=True)
class IdmParams:
    max_accel_a: float = 1.5
    desired_speed_v0: float = 30.0
    accel_exponent_delta: float = 4.0
    min_gap_s0: float = 2.0
    safe_headway_Ts: float = 1.5
    comfort_decel_b: float = 2.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"IdmParams.{k} must be > 0, got {v}")
        if self.accel_exponent_delta < 1:
            raise ValueError("IdmParams.accel_exponent_delta must be >= 1")

    def scaled(self, headway: float = 1.0, accel: float = 1.0) -> "IdmParams":
        return replace(self, safe_headway_Ts=self.safe_headway_Ts * headway,
                       max_accel_a=self.max_accel_a * accel)


@dataclass(frozen=True)
class HdvParams:
    base: IdmParams = IdmParams()
    tau_gap: float = 0.5
    tau_speed: float = 0.3
    tau_dspeed: float = 0.5
    gap_error_factor: float = 1.0
    dspeed_error_factor: float = 1.0

    def __post_init__(self):
        for k in ("tau_gap", "tau_speed", "tau_dspeed"):
            if getattr(self, k) < 0:
                raise ValueError(f"HdvParams.{k} must be >= 0")
        for k in ("gap_error_factor", "dspeed_error_factor"):
            f = getattr(self, k)
            if not 0.5 < f < 1.5:
                raise ValueError(f"HdvParams.{k} must lie in (0.5, 1.5)")

    @property
    def max_delay(self) -> float:
        return max(self.tau_gap, self.tau_speed, self.tau_dspeed)


@dataclass(frozen=True)
class CavParams:
    base: IdmParams = IdmParams()
    cooling_factor_c: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.cooling_factor_c <= 1.0:
            raise ValueError("CavParams.cooling_factor_c must lie in [0, 1]")


def idm_accel(gap: float, speed: float, dspeed: float, p: IdmParams,
              decel_limit: float = B_EMERGENCY) -> float:
    """Intelligent driver model acceleration, clamped to ``[-decel_limit, a]``."""
    if not gap > 0:
        raise DomainError(f"non-positive gap {gap!r}")
    a = p.max_accel_a
    s_star = p.min_gap_s0 + max(0.0, speed * p.safe_headway_Ts
                                + speed * dspeed / (2.0 * math.sqrt(a * p.comfort_decel_b)))
    acc = a * (1.0 - (speed / p.desired_speed_v0) ** p.accel_exponent_delta - (s_star / gap) ** 2)
    return min(a, max(-decel_limit, acc))


def free_accel(speed: float, p: IdmParams) -> float:
    """IDM acceleration with no leader in sight."""
    return p.max_accel_a * (1.0 - (speed / p.desired_speed_v0) ** p.accel_exponent_delta)


class StateHistory:
    """Time-stamped (gap, speed, dspeed) samples for delayed perception.

    Lookups interpolate linearly; queries before the first sample return the first
    sample and queries at or after the last return the last one.
    """

    def __init__(self, span: float = 2.0):
        self.span = span
        self.t: deque = deque()
        self.samples: deque = deque()

    def append(self, t: float, gap: float, speed: float, dspeed: float) -> None:
        if self.t and t < self.t[-1]:
            raise ValueError("history timestamps must be non-decreasing")
        if self.t and t == self.t[-1]:
            self.samples[-1] = (gap, speed, dspeed)
            return
        self.t.append(t)
        self.samples.append((gap, speed, dspeed))
        # keep one sample older than the span so t - span stays interpolable
        while len(self.t) > 2 and self.t[1] <= t - self.span:
            self.t.popleft()
            self.samples.popleft()

    def __len__(self) -> int:
        return len(self.t)

    def copy(self) -> "StateHistory":
        h = StateHistory(self.span)
        h.t = deque(self.t)
        h.samples = deque(self.samples)
        return h

    def lookup(self, t: float, field: int) -> float:
        if not self.t:
            raise ValueError("empty history")
        ts = self.t
        if t <= ts[0]:
            return self.samples[0][field]
        if t >= ts[-1]:
            return self.samples[-1][field]
        i = bisect_right(ts, t)
        t0, t1 = ts[i - 1], ts[i]
        y0, y1 = self.samples[i - 1][field], self.samples[i][field]
        return y0 + (t - t0) / (t1 - t0) * (y1 - y0)

    def gap(self, t: float) -> float:
        return self.lookup(t, 0)

    def speed(self, t: float) -> float:
        return self.lookup(t, 1)

    def dspeed(self, t: float) -> float:
        return self.lookup(t, 2)


def hdv_accel(history: StateHistory, now: float, p: HdvParams,
              decel_limit: float = B_EMERGENCY) -> float:
    """IDM fed with delayed, error-scaled perception."""
    gap = p.gap_error_factor * history.gap(now - p.tau_gap)
    speed = history.speed(now - p.tau_speed)
    dspeed = p.dspeed_error_factor * history.dspeed(now - p.tau_dspeed)
    return idm_accel(gap, speed, dspeed, p.base, decel_limit)


def cah_accel(gap: float, speed: float, dspeed: float, leader_accel: float, p: IdmParams) -> float:
    """Constant-acceleration heuristic: the highest acceleration that avoids a crash
    assuming the leader keeps its current acceleration (capped at ``a``)."""
    if not gap > 0:
        raise DomainError(f"non-positive gap {gap!r}")
    a_lead = min(leader_accel, p.max_accel_a)
    v_lead = speed - dspeed
    if v_lead * dspeed <= -2.0 * gap * a_lead:
        denom = v_lead * v_lead - 2.0 * gap * a_lead
        if denom <= 0.0:
            return a_lead
        return speed * speed * a_lead / denom
    closing = max(dspeed, 0.0)
    return a_lead - closing * closing / (2.0 * gap)


def cav_accel(gap: float, speed: float, dspeed: float, leader_accel: float, p: CavParams,
              decel_limit: float = B_EMERGENCY) -> float:
    a_idm = idm_accel(gap, speed, dspeed, p.base, decel_limit)
    c = p.cooling_factor_c
    a_cah = cah_accel(gap, speed, dspeed, leader_accel, p.base)
    b = p.base.comfort_decel_b
    acc = (1.0 - c) * a_idm + c * (a_cah + b * math.tanh((a_idm - a_cah) / b))
    return min(p.base.max_accel_a, max(-decel_limit, acc))


@dataclass(frozen=True)
class LaneChangePoly:
    """Quintic lateral offset y(x) with zero slope and curvature at both ends.

    Evaluation uses the normalized coordinate ``u = (x - x_start) / (x_end - x_start)``;
    :meth:`coefficients` expands it into powers of absolute ``x``.
    """

    x_start: float
    x_end: float
    lateral_offset_d: float

    @property
    def span(self) -> float:
        return self.x_end - self.x_start

    def _u(self, x):
        return (np.asarray(x, dtype=float) - self.x_start) / self.span

    def __call__(self, x):
        u = self._u(x)
        return self.lateral_offset_d * u ** 3 * (10.0 + u * (-15.0 + 6.0 * u))

    def slope(self, x):
        u = self._u(x)
        return self.lateral_offset_d * 30.0 * u ** 2 * (1.0 - u) ** 2 / self.span

    def curvature(self, x):
        u = self._u(x)
        return self.lateral_offset_d * 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / self.span ** 2

    def coefficients(self) -> np.ndarray:
        """a0..a5 such that y(x) = sum a_i x**i."""
        x0, L, d = self.x_start, self.span, self.lateral_offset_d
        # d * (10u^3 - 15u^4 + 6u^5) with u = (x - x0)/L
        poly_u = np.polynomial.Polynomial([0, 0, 0, 10 * d, -15 * d, 6 * d])
        u_of_x = np.polynomial.Polynomial([-x0 / L, 1.0 / L])
        return poly_u(u_of_x).coef


def fit_quintic(x_start: float, x_end: float, lateral_offset: float) -> LaneChangePoly:
    if not x_end > x_start:
        raise ValueError(f"x_end ({x_end}) must exceed x_start ({x_start})")
    if lateral_offset == 0:
        raise ValueError("lateral_offset must be non-zero")
    return LaneChangePoly(float(x_start), float(x_end), float(lateral_offset))


def lc_trajectory(poly: LaneChangePoly, start_state, accel_fn: Callable[[float], float],
                  t0: float, tf: float, dt: float) -> Trajectory:
    """Sample a lane change: longitudinal double integration of ``accel_fn(t)`` from the
    start speed, lateral offset read off the quintic at the current ``x``.

    ``start_state`` needs ``x``, ``y``, ``speed`` (and optionally ``length``, ``width``).
    """
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round((tf - t0) / dt))
    ts = t0 + dt * np.arange(n + 1)
    lo, hi = min(0.0, poly.lateral_offset_d), max(0.0, poly.lateral_offset_d)
    tol = 1e-9 * max(1.0, abs(poly.x_end))

    x = float(start_state.x)
    v = float(start_state.speed)
    a = float(accel_fn(ts[0]))
    rows = []
    truncated = False
    for k, t in enumerate(ts):
        if k > 0:
            a_new = float(accel_fn(t))
            v_new = v + 0.5 * (a + a_new) * dt
            x += 0.5 * (v + v_new) * dt
            v, a = v_new, a_new
        if x < poly.x_start - tol or x > poly.x_end + tol:
            truncated = True
            break
        xc = min(max(x, poly.x_start), poly.x_end)
        y = min(hi, max(lo, float(poly(xc))))
        rows.append((t, x, start_state.y + y, v, a, math.atan(float(poly.slope(xc)))))
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    return Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5],
                      getattr(start_state, "length", 5.0), getattr(start_state, "width", 2.0),
                      truncated=truncated)


def idm_equilibrium_gap(speed: float, p: IdmParams) -> float:
    """Bumper gap at which IDM acceleration is zero for a leader at equal speed."""
    free = 1.0 - (speed / p.desired_speed_v0) ** p.accel_exponent_delta
    if free <= 0:
        return math.inf
    return (p.min_gap_s0 + speed * p.safe_headway_Ts) / math.sqrt(free)
