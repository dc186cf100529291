"""2D wall avoidance with a movable hole and goal.

A vertical wall of thickness ``thickness`` stands at ``x = x_c``. It is open
for ``|y - y_c| < half_height`` and extends without bound above and below, so
the only way past is through the hole. Trajectories are 2D workspace paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cnmp import DemonstrationSet, ObservationPoint, Trajectory

WORKSPACE = 10.0
HALF_HEIGHT = 0.5
THICKNESS = 0.2
START = (0.0, 5.0)
CROSS_OFFSET = 0.5
N_SAMPLES = 100
MAX_SEG = 0.01
TOLERANCE = 0.01 * WORKSPACE


@dataclass(frozen=True)
class WallEnv:
    x_c: float
    y_c: float
    x_g: float
    y_g: float
    half_height: float = HALF_HEIGHT
    thickness: float = THICKNESS
    start: tuple = START
    success_threshold: float = -TOLERANCE
    name: str = "wall"
    sm_width: int = 2
    gamma_width: int = 4

    @property
    def params(self) -> list:
        return [self.x_c, self.y_c, self.x_g, self.y_g]

    @property
    def gamma(self) -> np.ndarray:
        return np.asarray(self.params, dtype=float)

    @property
    def goal(self) -> np.ndarray:
        return np.array([self.x_g, self.y_g])

    def depth(self, points) -> np.ndarray:
        """Penetration depth into wall material; zero outside it."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        half_w = 0.5 * self.thickness
        dx = half_w - np.abs(p[:, 0] - self.x_c)
        dy = np.abs(p[:, 1] - self.y_c) - self.half_height
        return np.maximum(np.minimum(dx, dy), 0.0)

    def penalty(self, points, max_seg=MAX_SEG) -> float:
        """Arc-length integral of penetration depth along a polyline."""
        p = np.asarray(points, dtype=float)
        seg = p[1:] - p[:-1]
        length = np.hypot(seg[:, 0], seg[:, 1])
        pieces = np.maximum(1, np.ceil(length / max_seg).astype(int))
        total = 0.0
        for a, d, ln, n in zip(p[:-1], seg, length, pieces):
            if ln == 0.0:
                continue
            s = np.linspace(0.0, 1.0, n + 1)[:, None]
            dep = self.depth(a + s * d)
            total += np.trapezoid(dep, dx=ln / n)
        return float(total)

    def evaluate(self, traj: Trajectory) -> float:
        return wall_evaluate(self, traj)

    def conditioning(self):
        return [ObservationPoint(0.0, self.gamma, self.start)]


def wall_evaluate(env: WallEnv, traj: Trajectory) -> float:
    if traj.sm_width != 2:
        raise ValueError("wall trajectories are 2D paths")
    start_err = np.linalg.norm(traj.value_at(0.0) - np.asarray(env.start))
    goal_err = np.linalg.norm(traj.value_at(1.0) - env.goal)
    dense = _densify(traj)
    return 0.0 - float(start_err + goal_err + env.penalty(dense))


def _densify(traj: Trajectory) -> np.ndarray:
    # the polyline through the samples, including any interpolated endpoints
    t = traj.times
    pts = traj.values
    if t[0] > 0.0:
        pts = np.vstack([traj.value_at(0.0), pts])
    if t[-1] < 1.0:
        pts = np.vstack([pts, traj.value_at(1.0)])
    return pts


def sample_wall_env(rng: np.random.Generator, **kw) -> WallEnv:
    x_c = rng.uniform(2.0, 8.0)
    y_c = rng.uniform(1.0, 9.0)
    x_g = rng.uniform(x_c + 1.5, WORKSPACE)
    y_g = rng.uniform(0.0, WORKSPACE)
    return WallEnv(float(x_c), float(y_c), float(x_g), float(y_g), **kw)


def wall_plan(env: WallEnv, n_samples=N_SAMPLES, offset=CROSS_OFFSET) -> np.ndarray:
    """Start, line up with the hole, cross horizontally, go to the goal.

    Samples are uniform in arc length, so the crossing happens at a
    different time in every environment.
    """
    corners = np.array([env.start, (env.x_c - offset, env.y_c), (env.x_c + offset, env.y_c), env.goal], dtype=float)
    seg = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    u = np.linspace(0.0, s[-1], n_samples)
    return np.stack([np.interp(u, s, corners[:, k]) for k in range(2)], axis=1)


def wall_demos(envs, n_samples=N_SAMPLES) -> DemonstrationSet:
    t = np.linspace(0.0, 1.0, n_samples)
    return DemonstrationSet([Trajectory(f"wall{i}", env.gamma, t, wall_plan(env, n_samples))
                             for i, env in enumerate(envs)])
