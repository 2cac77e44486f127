"""Virtual-vehicle planning with cubic boundary-value motions and the tanh leader handover."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .traffic_models import B_EMERGENCY

MIN_HORIZON = 0.5  # s, below this the cubic system is treated as ill-conditioned


class IllConditionedError(ValueError):
    pass


class InfeasiblePlanError(ValueError):
    pass


@dataclass(frozen=True)
class CubicMotion:
    """x(t) = b0 + b1 t + b2 t^2 + b3 t^3 on [t_begin, t_end], in absolute time.

    The polynomial is stored in the shifted variable ``s = t - t_begin`` for
    conditioning; :meth:`coefficients` gives the absolute-time form.
    """

    c0: float
    c1: float
    c2: float
    c3: float
    t_begin: float
    t_end: float

    def position(self, t):
        s = np.asarray(t, dtype=float) - self.t_begin
        return self.c0 + s * (self.c1 + s * (self.c2 + s * self.c3))

    def velocity(self, t):
        s = np.asarray(t, dtype=float) - self.t_begin
        return self.c1 + s * (2.0 * self.c2 + 3.0 * s * self.c3)

    def acceleration(self, t):
        s = np.asarray(t, dtype=float) - self.t_begin
        return 2.0 * self.c2 + 6.0 * self.c3 * s

    def coefficients(self) -> np.ndarray:
        """b0..b3 of the absolute-time cubic."""
        p = np.polynomial.Polynomial([self.c0, self.c1, self.c2, self.c3])
        return p(np.polynomial.Polynomial([-self.t_begin, 1.0])).coef

    def accel_range(self) -> tuple:
        # acceleration is affine in t, so its extremes sit at the endpoints
        a0, a1 = float(self.acceleration(self.t_begin)), float(self.acceleration(self.t_end))
        return min(a0, a1), max(a0, a1)

    def min_speed(self) -> float:
        cands = [self.t_begin, self.t_end]
        if self.c3 != 0.0:
            s_star = -self.c2 / (3.0 * self.c3)
            if 0.0 < s_star < self.t_end - self.t_begin:
                cands.append(self.t_begin + s_star)
        return min(float(self.velocity(t)) for t in cands)


def solve_cubic_bvp(x0: float, v0: float, xf: float, vf: float, t0: float, tf: float,
                    min_horizon: float = MIN_HORIZON) -> CubicMotion:
    """Cubic through (x0, v0) at t0 and (xf, vf) at tf."""
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    T = tf - t0
    if T < min_horizon - 1e-9:
        raise IllConditionedError(f"horizon {T:.3g}s below minimum {min_horizon}s")
    # position/velocity rows at s=0 and s=T; s=0 rows give c0, c1 directly
    A = np.array([[T ** 2, T ** 3], [2.0 * T, 3.0 * T ** 2]])
    rhs = np.array([xf - x0 - v0 * T, vf - v0])
    c2, c3 = np.linalg.solve(A, rhs)
    return CubicMotion(float(x0), float(v0), float(c2), float(c3), float(t0), float(tf))


def check_plan(motion: CubicMotion, max_accel: float, decel_limit: float = B_EMERGENCY,
               allow_reverse: bool = False) -> CubicMotion:
    lo, hi = motion.accel_range()
    if lo < -decel_limit - 1e-12 or hi > max_accel + 1e-12:
        raise InfeasiblePlanError(
            f"required acceleration [{lo:.3g}, {hi:.3g}] outside [{-decel_limit}, {max_accel}]")
    if not allow_reverse and motion.min_speed() < -1e-9:
        raise InfeasiblePlanError("plan requires negative speed")
    return motion


def plan_longitudinal_vr(vmf_state: tuple, vr_target: tuple, t0: float, tf: float,
                         max_accel: float, decel_limit: float = B_EMERGENCY) -> CubicMotion:
    """Virtual vehicle in lane 1 that starts on the leader's state and ends on VR's merge state.

    ``vmf_state`` and ``vr_target`` are ``(x, v)`` pairs at ``t0`` and ``tf``.
    """
    m = solve_cubic_bvp(vmf_state[0], vmf_state[1], vr_target[0], vr_target[1], t0, tf)
    return check_plan(m, max_accel, decel_limit)


def plan_lateral_vmc(vnf_state: tuple, vmc_target: tuple, t0: float, tf: float,
                     max_accel: float, decel_limit: float = B_EMERGENCY) -> CubicMotion:
    """Virtual vehicle in lane 2 that starts on VNF's state and ends on VMC's lane-change state."""
    m = solve_cubic_bvp(vnf_state[0], vnf_state[1], vmc_target[0], vmc_target[1], t0, tf)
    return check_plan(m, max_accel, decel_limit)


@dataclass(frozen=True)
class TransitionBlend:
    lam: float
    gamma: float
    t_begin: float
    t_end: float

    @classmethod
    def over(cls, t_begin: float, t_end: float, saturation: float = 3.0) -> "TransitionBlend":
        """Place the tanh argument at -saturation and +saturation on the window ends."""
        if not t_end > t_begin:
            raise ValueError("t_end must exceed t_begin")
        lam = 2.0 * saturation / (t_end - t_begin)
        return cls(lam, lam * t_begin + saturation, t_begin, t_end)

    def psi(self, tau: float) -> float:
        return 0.5 * (math.tanh(self.lam * tau - self.gamma) + 1.0)


def blended_accel(a_ori: float, a_new: float, tau: float, blend: TransitionBlend) -> float:
    w = blend.psi(tau)
    return w * a_new + (1.0 - w) * a_ori
