"""Arm tasks for cross-morphology transfer.

Both arms work in the same plane with their base at the origin. The button
task puts a wall along ``x = WALL_X`` with a narrow gap; the end effector
must thread the gap and push a cube (treated as a disc) onto a goal. Crossing
the wall line outside the gap counts as a collision and the cube stays put.

Proxy tasks are end-effector path families shared by both arms and turned
into joint trajectories by inverse kinematics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cnmp import DemonstrationSet, ObservationPoint, Trajectory
from .arm import PlanarArm, end_effector, ik_track, waypoint_path
from .push import densify, push_disc

SOURCE_ARM = PlanarArm((0.4, 0.35, 0.25))
TARGET_ARM = PlanarArm((0.3, 0.3, 0.2, 0.2))
HOME_EE = (0.25, 0.5)
# elbow-up seeds; the actual home posture is the IK solution nearest to these
HOME_SEEDS = {3: (0.4, 1.4, 1.2), 4: (0.3, 1.0, 0.9, 0.8)}

WALL_X = 0.45
GAP_Y = 0.15
GAP_HALF = 0.03
CUBE_START = (0.6, 0.15)
CUBE_GOAL = (0.75, 0.15)
CUBE_RADIUS = 0.04
TOLERANCE = 0.02
N_SAMPLES = 200

PROXY_FAMILIES = ("reach", "push", "insert", "via")
PROXY_REGION = ((0.25, 0.75), (-0.1, 0.45))


def home_posture(arm: PlanarArm) -> np.ndarray:
    seed = np.asarray(HOME_SEEDS[arm.dof], dtype=float)
    return ik_track(arm, [HOME_EE], seed, iters=200)[0]


def ee_path_to_joints(arm: PlanarArm, path, times, tid, task_params=()) -> Trajectory:
    q = ik_track(arm, path, home_posture(arm))
    err = np.linalg.norm(end_effector(arm, q) - path, axis=1).max()
    if err > 1e-3:
        raise ValueError(f"path {tid} is out of reach (IK error {err:.3g})")
    return Trajectory(tid, list(task_params), times, q)


def wall_crossings(points, wall_x=WALL_X) -> np.ndarray:
    """Heights at which a polyline crosses the line ``x = wall_x``."""
    p = np.asarray(points, dtype=float)
    side = p[:, 0] >= wall_x
    k = np.flatnonzero(side[1:] != side[:-1])
    a, b = p[k], p[k + 1]
    s = (wall_x - a[:, 0]) / (b[:, 0] - a[:, 0])
    return a[:, 1] + s * (b[:, 1] - a[:, 1])


@dataclass(frozen=True)
class ButtonEnv:
    arm: PlanarArm = TARGET_ARM
    wall_x: float = WALL_X
    gap_y: float = GAP_Y
    gap_half: float = GAP_HALF
    cube_start: tuple = CUBE_START
    cube_goal: tuple = CUBE_GOAL
    radius: float = CUBE_RADIUS
    success_threshold: float = -TOLERANCE
    name: str = "button"
    gamma_width: int = 0

    @property
    def sm_width(self) -> int:
        return self.arm.dof

    @property
    def params(self) -> list:
        return [self.wall_x, self.gap_y, self.gap_half, *self.cube_start, *self.cube_goal]

    @property
    def gamma(self) -> np.ndarray:
        return np.zeros(0)

    def collides(self, ee_points) -> bool:
        ys = wall_crossings(ee_points, self.wall_x)
        return bool(np.any(np.abs(ys - self.gap_y) >= self.gap_half))

    def final_cube(self, traj: Trajectory) -> np.ndarray:
        ee = densify(self.arm, traj.values)
        if self.collides(ee):
            return np.asarray(self.cube_start, dtype=float)
        return push_disc(ee, self.cube_start, self.radius)[0]

    def evaluate(self, traj: Trajectory) -> float:
        return button_env_evaluate(self, traj)

    def conditioning(self):
        return [ObservationPoint(0.0, self.gamma, home_posture(self.arm))]


def button_env_evaluate(env: ButtonEnv, joint_traj: Trajectory) -> float:
    if joint_traj.sm_width != env.arm.dof:
        raise ValueError(f"expected a {env.arm.dof}-joint trajectory")
    final = env.final_cube(joint_traj)
    return 0.0 - float(np.linalg.norm(final - np.asarray(env.cube_goal)))


def button_path(env: ButtonEnv, t):
    """Line up with the gap, then push horizontally through it onto the goal."""
    goal = np.asarray(env.cube_goal, dtype=float)
    start = np.asarray(env.cube_start, dtype=float)
    u = (goal - start) / np.linalg.norm(goal - start)
    pre = (env.wall_x - 0.07, env.gap_y)
    end = goal - env.radius * u
    return waypoint_path([HOME_EE, pre, pre, end, end], [0.0, 0.35, 0.4, 0.9, 1.0], t)


def button_demo(env: ButtonEnv, n_samples=N_SAMPLES, tid="button") -> Trajectory:
    t = np.linspace(0.0, 1.0, n_samples)
    tr = ee_path_to_joints(env.arm, button_path(env, t), t, tid)
    if env.evaluate(tr) < env.success_threshold:
        raise ValueError("scripted button trajectory fails its own task")
    return tr


def proxy_path(family: str, a, b, t):
    """End-effector path of a proxy family through waypoints ``a`` and ``b``."""
    if family == "reach":
        return waypoint_path([HOME_EE, b, b], [0.0, 0.7, 1.0], t)
    if family == "push":
        return waypoint_path([HOME_EE, a, a, b, b], [0.0, 0.35, 0.4, 0.9, 1.0], t)
    if family == "insert":
        # slow final approach along a short straight segment
        return waypoint_path([HOME_EE, a, b], [0.0, 0.5, 1.0], t)
    if family == "via":
        return waypoint_path([HOME_EE, a, b], [0.0, 0.4, 1.0], t)
    raise ValueError(f"unknown proxy family {family!r}")


def sample_proxy_waypoints(family: str, rng: np.random.Generator):
    (x0, x1), (y0, y1) = PROXY_REGION
    a = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
    if family == "insert":
        ang = rng.uniform(-np.pi, np.pi)
        b = a + rng.uniform(0.05, 0.1) * np.array([np.cos(ang), np.sin(ang)])
    elif family == "push":
        ang = rng.uniform(-0.5, 0.5)
        b = a + rng.uniform(0.15, 0.35) * np.array([np.cos(ang), np.sin(ang)])
    else:
        b = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
    return a, b


def proxy_pairs(n_per_family: int, rng: np.random.Generator, n_source=N_SAMPLES, n_target=N_SAMPLES,
                source_arm=SOURCE_ARM, target_arm=TARGET_ARM):
    """Matched proxy demonstrations for the two arms.

    Returns ``(source_set, target_set)``; trajectory ``i`` of one set shows
    the same end-effector path as trajectory ``i`` of the other. The arms may
    use different sample counts.
    """
    src, tgt = [], []
    for family in PROXY_FAMILIES:
        k = 0
        while k < n_per_family:
            a, b = sample_proxy_waypoints(family, rng)
            ts = np.linspace(0.0, 1.0, n_source)
            tt = np.linspace(0.0, 1.0, n_target)
            tid = f"{family}{k}"
            try:
                s = ee_path_to_joints(source_arm, proxy_path(family, a, b, ts), ts, tid)
                g = ee_path_to_joints(target_arm, proxy_path(family, a, b, tt), tt, tid)
            except ValueError:
                continue
            src.append(s)
            tgt.append(g)
            k += 1
    return DemonstrationSet(src), DemonstrationSet(tgt)
