"""2D via-point obstacle avoidance.

The world is the ``(x, y)`` plane with ``x = t``; a trajectory's single
sensorimotor channel is its height ``y(t)``. Every demonstration starts at
``(0, 0)``, ends at ``(1, 0)`` and bulges upward between two elliptical
obstacles. Its task parameter is the height reached at ``t = 0.5``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cnmp import DemonstrationSet, Trajectory

VIA_TIME = 0.5
N_SAMPLES = 100
HEIGHT_RANGE = (0.3, 0.6)
# (cx, cy, rx, ry); one obstacle under the bulge, one left of it.
OBSTACLES = ((0.5, 0.05, 0.2, 0.1), (0.15, 0.6, 0.08, 0.15))
TOLERANCE = 0.05


def bump(t, height):
    return height * np.sin(np.pi * np.asarray(t, dtype=float)) ** 2


def inside_ellipse(x, y, ellipse) -> np.ndarray:
    cx, cy, rx, ry = ellipse
    return ((np.asarray(x) - cx) / rx) ** 2 + ((np.asarray(y) - cy) / ry) ** 2 < 1.0


def hits_obstacle(traj: Trajectory) -> bool:
    y = traj.values[:, 0]
    return any(np.any(inside_ellipse(traj.times, y, e)) for e in OBSTACLES)


def viapoint_demos(n: int, rng: np.random.Generator, n_samples=N_SAMPLES, times=None) -> DemonstrationSet:
    """``n`` bump demonstrations with heights spread over ``HEIGHT_RANGE``.

    Heights are stratified with a random offset inside each stratum. Passing
    ``times`` (one array per demo, or a callable ``rng -> array``) gives
    demonstrations on non-shared time grids.
    """
    if n < 1:
        raise ValueError("need at least one demonstration")
    lo, hi = HEIGHT_RANGE
    u = rng.uniform(0.2, 0.8, size=n)
    heights = lo + (hi - lo) * (np.arange(n) + u) / n if n > 1 else np.array([0.5 * (lo + hi)])
    if n > 1:
        heights[0], heights[-1] = lo, hi
    trajs = []
    for i, h in enumerate(heights):
        if times is None:
            t = np.linspace(0.0, 1.0, n_samples)
        elif callable(times):
            t = times(rng)
        else:
            t = np.asarray(times[i], dtype=float)
        trajs.append(Trajectory(f"demo{i}", [h], t, bump(t, h)))
    return DemonstrationSet(trajs)


def random_time_grid(n_samples=N_SAMPLES):
    """Callable producing a non-uniform grid that keeps both endpoints."""

    def grid(rng):
        inner = np.sort(rng.uniform(0.0, 1.0, size=n_samples - 2))
        t = np.concatenate([[0.0], inner, [1.0]])
        return np.unique(t)

    return grid


@dataclass(frozen=True)
class ViaPointEnv:
    """Reward ``-|traj(t*) - p*|`` for a via-point ``(t*, p*)``."""

    via_time: float
    via_value: np.ndarray
    success_threshold: float = -TOLERANCE
    name: str = "viapoint2d"
    sm_width: int = 1
    gamma_width: int = 1

    @classmethod
    def at_height(cls, height: float, via_time: float = VIA_TIME):
        return cls(via_time, np.atleast_1d(np.asarray(height, dtype=float)))

    @property
    def params(self) -> list:
        return [self.via_time, *map(float, self.via_value)]

    @property
    def gamma(self) -> np.ndarray:
        return np.asarray(self.via_value, dtype=float)

    def evaluate(self, traj: Trajectory) -> float:
        return viapoint_reward(traj, self.via_time, self.via_value)

    def conditioning(self):
        from ..cnmp import ObservationPoint

        return [ObservationPoint(self.via_time, self.gamma, self.via_value)]


def viapoint_reward(traj: Trajectory, via_time: float, via_value) -> float:
    if not 0.0 <= via_time <= 1.0:
        raise ValueError("via time must lie in [0, 1]")
    point = traj.value_at(via_time)
    return -float(np.linalg.norm(point - np.atleast_1d(via_value)))
