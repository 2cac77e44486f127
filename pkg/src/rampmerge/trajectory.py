"""Time-indexed kinematic samples of a single vehicle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    a: np.ndarray
    heading: np.ndarray
    length: float = 5.0
    width: float = 2.0
    # set by lc_trajectory when x leaves the polynomial domain before tf
    truncated: bool = False
    vid: str = ""

    def __post_init__(self):
        for name in ("t", "x", "y", "v", "a", "heading"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.t)
        if any(len(getattr(self, k)) != n for k in ("x", "y", "v", "a", "heading")):
            raise ValueError("trajectory arrays must share one length")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def window(self, t_begin: float, t_end: float) -> "Trajectory":
        eps = 1e-9
        m = (self.t >= t_begin - eps) & (self.t <= t_end + eps)
        return Trajectory(self.t[m], self.x[m], self.y[m], self.v[m], self.a[m],
                          self.heading[m], self.length, self.width, self.truncated, self.vid)

    @classmethod
    def constant_speed(cls, x0: float, y0: float, v: float, t: np.ndarray,
                       length: float = 5.0, width: float = 2.0, vid: str = "") -> "Trajectory":
        t = np.asarray(t, dtype=float)
        n = len(t)
        return cls(t, x0 + v * (t - t[0]), np.full(n, y0), np.full(n, v), np.zeros(n),
                   np.zeros(n), length, width, vid=vid)


@dataclass
class TrajectoryRecorder:
    """Append-only builder used by the simulator loops."""

    length: float = 5.0
    width: float = 2.0
    vid: str = ""
    rows: list = field(default_factory=list)

    def append(self, t, x, y, v, a, heading):
        self.rows.append((t, x, y, v, a, heading))

    def build(self) -> Trajectory:
        if not self.rows:
            arr = np.zeros((0, 6))
        else:
            arr = np.array(self.rows, dtype=float)
        return Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5],
                          self.length, self.width, vid=self.vid)
