"""Merge evaluation costs (safety, fuel, efficiency) and unique-plan selection from a Pareto set."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .trajectory import Trajectory

SAFETY_THRESHOLD = 4.0  # m/s^2, critical-acceleration gate of the selection rule


class InfeasibleGapError(ValueError):
    """Gap too short to absorb an emergency stop of the leader."""


@dataclass(frozen=True)
class SafetyParams:
    delay_T: float = 1.0
    emergency_decel_a_merg: float = 6.0
    min_distance_D: float = 2.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"SafetyParams.{k} must be > 0")


# Polynomial fuel model (Kamal et al. 2013, as used by Rios-Torres & Malikopoulos 2018),
# coefficients converted from mL/s to L/s.
DEFAULT_Q = (0.1569e-3, 2.450e-5, -7.415e-7, 5.975e-8)
DEFAULT_R = (0.07224e-3, 9.681e-5, 1.075e-6)


@dataclass(frozen=True)
class FuelModelParams:
    Q: tuple = DEFAULT_Q
    R: tuple = DEFAULT_R

    def __post_init__(self):
        if len(self.Q) != 4 or len(self.R) != 3:
            raise ValueError("FuelModelParams needs 4 cruise and 3 acceleration coefficients")


@dataclass(frozen=True)
class ObjectiveVector:
    u_safe: float
    u_fuel: float
    u_eff: float

    def minimized(self) -> tuple:
        """Objective tuple in all-minimize form (efficiency is an incentive, so negate it)."""
        return (self.u_safe, self.u_fuel, -self.u_eff)


def u_safe(v_rear: float, v_front: float, d_cri: float, p: SafetyParams) -> float:
    """Deceleration the rear vehicle needs if the front one brakes at ``a_merg``."""
    denom = 2.0 * (d_cri - p.min_distance_D - v_rear * p.delay_T
                   + v_front ** 2 / (2.0 * p.emergency_decel_a_merg))
    if not denom > 0:
        raise InfeasibleGapError(f"gap {d_cri:.3g} m cannot absorb an emergency stop")
    return v_rear ** 2 / denom


def fuel_rate(v, a, p: FuelModelParams = FuelModelParams()):
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    q, r = p.Q, p.R
    cruise = q[0] + v * (q[1] + v * (q[2] + v * q[3]))
    accel = np.maximum(a, 0.0) * (r[0] + v * (r[1] + v * r[2]))
    out = np.maximum(cruise + accel, 0.0)
    return float(out) if out.ndim == 0 else out


def trajectory_fuel(tr: Trajectory, p: FuelModelParams = FuelModelParams()) -> float:
    if len(tr) < 2:
        return 0.0
    return float(trapezoid(fuel_rate(tr.v, tr.a, p), tr.t))


def u_fuel(vr_traj: Trajectory, vmc_traj: Trajectory | None,
           p: FuelModelParams = FuelModelParams()) -> float:
    total = trajectory_fuel(vr_traj, p)
    if vmc_traj is not None:
        total += trajectory_fuel(vmc_traj, p)
    return total


def u_eff(accels_before: dict, accels_after: dict, eta: float) -> float:
    """Acceleration incentive: VR's own gain plus ``eta`` times the neighbours' summed gain.

    Both dicts map role name to acceleration; VR is keyed ``"VR"``. Neighbours missing
    from either dict contribute nothing.
    """
    gain = accels_after["VR"] - accels_before["VR"]
    others = sum(accels_after[k] - accels_before[k]
                 for k in accels_before if k != "VR" and k in accels_after)
    return gain + eta * others


def _normalize(vals: np.ndarray) -> np.ndarray:
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return np.zeros_like(vals)
    return (vals - lo) / (hi - lo)


def select_unique(pareto: Sequence, threshold: float = SAFETY_THRESHOLD):
    """Pick one plan from a Pareto set.

    Plans need ``objectives`` (an :class:`ObjectiveVector`) and a sortable ``decision``.
    If every plan exceeds the safety threshold the safest wins; otherwise the plans
    under it are ranked by normalized (-u_eff) + normalized u_fuel.
    """
    plans = list(pareto)
    if not plans:
        raise ValueError("cannot select from an empty set")
    safe = np.array([p.objectives.u_safe for p in plans])
    if safe.min() > threshold:
        order = sorted(range(len(plans)), key=lambda i: (safe[i], plans[i].decision.key()))
        return plans[order[0]]
    idx = [i for i in range(len(plans)) if safe[i] <= threshold]
    neg_eff = np.array([-plans[i].objectives.u_eff for i in idx])
    fuel = np.array([plans[i].objectives.u_fuel for i in idx])
    score = _normalize(neg_eff) + _normalize(fuel)
    best = min(range(len(idx)), key=lambda j: (score[j], safe[idx[j]], plans[idx[j]].decision.key()))
    return plans[idx[best]]


@dataclass(frozen=True)
class ScalarizationBounds:
    """Fixed reference ranges for the single-objective baselines."""

    neg_eff: tuple = (-3.0, 3.0)
    fuel: tuple = (0.0, 0.1)


INFEASIBLE_COST = 1e6


def scalarized_cost(obj: ObjectiveVector | None, bounds: ScalarizationBounds = ScalarizationBounds(),
                    feasible: bool = True, threshold: float = SAFETY_THRESHOLD) -> float:
    """Safety-gated normalized fuel + efficiency sum with fixed reference bounds.

    Plans over the safety threshold cost ``10 + u_safe`` so they lose to any plan
    under it and rank among themselves by safety.
    """
    if not feasible or obj is None:
        return INFEASIBLE_COST
    if obj.u_safe > threshold:
        return 10.0 + obj.u_safe
    e_lo, e_hi = bounds.neg_eff
    f_lo, f_hi = bounds.fuel
    return (-obj.u_eff - e_lo) / (e_hi - e_lo) + (obj.u_fuel - f_lo) / (f_hi - f_lo)
