"""Rectangle-footprint collision checks: bounding-box rejection, then cross-product straddle test."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .trajectory import Trajectory

Point = Tuple[float, float]


@dataclass(frozen=True)
class Segment2D:
    p1: Point
    p2: Point


@dataclass(frozen=True)
class VehicleFootprint:
    center: Point
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("footprint length and width must be positive")

    def corners(self) -> list:
        cx, cy = self.center
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        return [(cx + dx * c - dy * s, cy + dx * s + dy * c)
                for dx, dy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]

    def edges(self) -> list:
        cs = self.corners()
        return [Segment2D(cs[i], cs[(i + 1) % 4]) for i in range(4)]

    @property
    def radius(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)


def quick_reject(a: Segment2D, b: Segment2D) -> bool:
    """True when the closed bounding boxes overlap, i.e. the segments may intersect."""
    (ax1, ay1), (ax2, ay2) = a.p1, a.p2
    (bx1, by1), (bx2, by2) = b.p1, b.p2
    return (min(ax1, ax2) <= max(bx1, bx2) and min(bx1, bx2) <= max(ax1, ax2)
            and min(ay1, ay2) <= max(by1, by2) and min(by1, by2) <= max(ay1, ay2))


def _cross(ox, oy, ax, ay, bx, by) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def straddle_intersect(a: Segment2D, b: Segment2D) -> bool:
    """Each segment's endpoints lie on opposite sides of (or on) the other's line.

    Touching and collinear overlap count as intersecting; callers gate this with
    :func:`quick_reject`, which is what rules out collinear-but-disjoint segments.
    """
    (p1x, p1y), (p2x, p2y) = a.p1, a.p2
    (q1x, q1y), (q2x, q2y) = b.p1, b.p2
    d1 = _cross(q1x, q1y, q2x, q2y, p1x, p1y)
    d2 = _cross(q1x, q1y, q2x, q2y, p2x, p2y)
    d3 = _cross(p1x, p1y, p2x, p2y, q1x, q1y)
    d4 = _cross(p1x, p1y, p2x, p2y, q2x, q2y)
    if d1 * d2 > 0 or d3 * d4 > 0:
        return False
    if d1 == 0 and d2 == 0 and d3 == 0 and d4 == 0:
        return quick_reject(a, b)
    return True


def segments_intersect(a: Segment2D, b: Segment2D) -> bool:
    return quick_reject(a, b) and straddle_intersect(a, b)


def _point_in_rect(p: Point, f: VehicleFootprint) -> bool:
    dx, dy = p[0] - f.center[0], p[1] - f.center[1]
    c, s = math.cos(f.heading), math.sin(f.heading)
    lx, ly = dx * c + dy * s, -dx * s + dy * c
    return abs(lx) <= 0.5 * f.length and abs(ly) <= 0.5 * f.width


def footprints_collide(f1: VehicleFootprint, f2: VehicleFootprint) -> bool:
    dx, dy = f1.center[0] - f2.center[0], f1.center[1] - f2.center[1]
    if dx * dx + dy * dy > (f1.radius + f2.radius) ** 2:
        return False
    e2 = f2.edges()
    for ea in f1.edges():
        for eb in e2:
            if quick_reject(ea, eb) and straddle_intersect(ea, eb):
                return True
    # full containment: no edge crossings at all
    return _point_in_rect(f1.center, f2) or _point_in_rect(f2.center, f1)


def _footprint_at(tr: Trajectory, k: int) -> VehicleFootprint:
    return VehicleFootprint((float(tr.x[k]), float(tr.y[k])), float(tr.heading[k]), tr.length, tr.width)


def trajectories_collide(t1: Trajectory, t2: Trajectory) -> Optional[float]:
    """Earliest common timestamp at which the footprints overlap, or None."""
    if len(t1) == 0 or len(t2) == 0:
        return None
    if len(t1) > 1 and len(t2) > 1 and not math.isclose(t1.dt, t2.dt, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"mismatched timesteps {t1.dt} vs {t2.dt}")
    step = t1.dt if len(t1) > 1 else (t2.dt if len(t2) > 1 else 1.0)
    # align on a shared integer grid so float drift in t does not break matching
    k1 = np.rint((t1.t - t1.t[0]) / step).astype(int)
    off = (t2.t[0] - t1.t[0]) / step
    if abs(off - round(off)) > 1e-6:
        raise ValueError("trajectories do not share a timebase")
    k2 = np.rint((t2.t - t2.t[0]) / step).astype(int) + int(round(off))
    common, i1, i2 = np.intersect1d(k1, k2, assume_unique=True, return_indices=True)
    if len(common) == 0:
        return None
    r = 0.5 * (math.hypot(t1.length, t1.width) + math.hypot(t2.length, t2.width))
    d2 = (t1.x[i1] - t2.x[i2]) ** 2 + (t1.y[i1] - t2.y[i2]) ** 2
    for j in np.flatnonzero(d2 <= r * r):
        if footprints_collide(_footprint_at(t1, i1[j]), _footprint_at(t2, i2[j])):
            return float(t1.t[i1[j]])
    return None


class MergeSequence(enum.Enum):
    AHEAD_OF_VMC = "AheadOfVMC"
    BETWEEN_VMC_AND_VMR = "BetweenVMCandVMR"
    INFEASIBLE = "Infeasible"


def classify_merge_gap(vr_traj: Trajectory, vmc_traj: Optional[Trajectory],
                       vmr_traj: Optional[Trajectory]) -> MergeSequence:
    """Merging sequence of VR relative to VMC and VMR at the end of the horizon.

    A sequence that puts VR in front of a neighbour is only accepted if VR never
    touches that neighbour; colliding with both rules out every sequence.
    A missing neighbour (None) never collides and is treated as infinitely far behind.
    """
    hit_vmc = vmc_traj is not None and trajectories_collide(vr_traj, vmc_traj) is not None
    hit_vmr = vmr_traj is not None and trajectories_collide(vr_traj, vmr_traj) is not None
    if hit_vmc and hit_vmr:
        return MergeSequence.INFEASIBLE
    x_end = vr_traj.x[-1]
    ahead_vmc = vmc_traj is None or x_end > vmc_traj.x[-1]
    ahead_vmr = vmr_traj is None or x_end > vmr_traj.x[-1]
    if ahead_vmc and ahead_vmr and not hit_vmc and not hit_vmr:
        return MergeSequence.AHEAD_OF_VMC
    if not ahead_vmc and ahead_vmr and not hit_vmc and not hit_vmr:
        return MergeSequence.BETWEEN_VMC_AND_VMR
    return MergeSequence.INFEASIBLE
