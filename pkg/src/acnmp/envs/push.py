"""Planar-arm disc pushing with quasi-static point contact.

The end effector is a point. Whenever it moves into the disc, the disc is
translated along the point's direction of motion until the point sits on its
rim; there is no rotation and no sideways sliding. Joint trajectories are densified in joint space
before simulation so the result does not depend on the sampling rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cnmp import DemonstrationSet, ObservationPoint, Trajectory
from .arm import PlanarArm, end_effector, ik_track, waypoint_path

PUSH_ARM = PlanarArm((0.4, 0.35, 0.25))
DISC_START = (0.5, 0.0)
DISC_RADIUS = 0.05
ARC_RADIUS = 0.25
ARC_ANGLES = np.deg2rad(np.linspace(-45.0, 67.5, 10))
HOME_Q = (-1.2, 2.2, 1.2)
APPROACH_MARGIN = 0.03
TOLERANCE = 0.01
MAX_EE_STEP = 0.002
N_SAMPLES = 200


class PlanError(RuntimeError):
    """A scripted demonstration failed its own task."""


def arc_targets(angles=ARC_ANGLES, center=DISC_START, radius=ARC_RADIUS) -> np.ndarray:
    c = np.asarray(center)
    return c + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def densify(arm: PlanarArm, q_traj, max_step=MAX_EE_STEP) -> np.ndarray:
    """End-effector points along a joint trajectory, no more than ``max_step`` apart."""
    q_traj = np.asarray(q_traj, dtype=float)
    ee = end_effector(arm, q_traj)
    seg = np.linalg.norm(np.diff(ee, axis=0), axis=1)
    # joint-space chords bend in Cartesian space; the factor 2 keeps pieces short
    pieces = np.maximum(1, np.ceil(2.0 * seg / max_step).astype(int))
    chunks = [q_traj[:1]]
    for k, n in enumerate(pieces):
        s = (np.arange(1, n + 1) / n)[:, None]
        chunks.append(q_traj[k] + s * (q_traj[k + 1] - q_traj[k]))
    return end_effector(arm, np.vstack(chunks))


def push_disc(points, center, radius):
    """Quasi-static pushing of a disc by a moving point.

    When a step of the point ends inside the disc, the disc is moved along
    that step's direction by the smallest amount that puts the point back on
    its rim. Returns ``(final_center, touched)``.
    """
    c = np.array(center, dtype=float)
    points = np.asarray(points, dtype=float)
    dist0 = np.linalg.norm(points - c, axis=1)
    hits = np.flatnonzero(dist0 < radius)
    if len(hits) == 0:
        return c, False
    r2 = radius * radius
    start = max(int(hits[0]), 1)
    for prev, p in zip(points[start - 1:-1], points[start:]):
        d = c - p
        dd = d @ d
        if dd >= r2:
            continue
        v = p - prev
        vn = np.hypot(v[0], v[1])
        if vn == 0.0:
            continue
        v = v / vn
        dv = d @ v
        c = c + (-dv + np.sqrt(dv * dv - dd + r2)) * v
    return c, True


@dataclass(frozen=True)
class PushEnv:
    target: tuple
    arm: PlanarArm = PUSH_ARM
    disc_start: tuple = DISC_START
    radius: float = DISC_RADIUS
    success_threshold: float = -TOLERANCE
    name: str = "push"
    sm_width: int = 3
    gamma_width: int = 2

    @property
    def gamma(self) -> np.ndarray:
        return np.asarray(self.target, dtype=float)

    @property
    def params(self) -> list:
        return [*map(float, self.target)]

    def final_disc(self, traj: Trajectory):
        return push_disc(densify(self.arm, traj.values), self.disc_start, self.radius)[0]

    def evaluate(self, traj: Trajectory) -> float:
        return push_evaluate(self, traj)

    def conditioning(self):
        return [ObservationPoint(0.0, self.gamma, HOME_Q)]


def push_evaluate(env: PushEnv, joint_traj: Trajectory) -> float:
    if joint_traj.sm_width != env.arm.dof:
        raise ValueError(f"expected a {env.arm.dof}-joint trajectory")
    final = env.final_disc(joint_traj)
    return -float(np.linalg.norm(final - np.asarray(env.target)))


def push_plan(env: PushEnv, n_samples=N_SAMPLES, home_q=HOME_Q) -> Trajectory:
    """Scripted demonstration: approach behind the disc, push straight, hold."""
    c0 = np.asarray(env.disc_start, dtype=float)
    target = np.asarray(env.target, dtype=float)
    u = (target - c0) / np.linalg.norm(target - c0)
    home = end_effector(env.arm, np.asarray(home_q))
    pre = c0 - (env.radius + APPROACH_MARGIN) * u
    end = target - env.radius * u
    t = np.linspace(0.0, 1.0, n_samples)
    path = waypoint_path([home, pre, pre, end, end], [0.0, 0.35, 0.4, 0.9, 1.0], t)
    q = ik_track(env.arm, path, home_q)
    return Trajectory(f"push-{target[0]:.3f}-{target[1]:.3f}", target, t, q)


def push_demos(targets, n_samples=N_SAMPLES) -> DemonstrationSet:
    trajs = []
    for i, target in enumerate(np.atleast_2d(targets)):
        env = PushEnv(tuple(map(float, target)))
        tr = push_plan(env, n_samples)
        tr.id = f"push{i}"
        reward = push_evaluate(env, tr)
        if reward < env.success_threshold:
            raise PlanError(f"scripted push to {target} scored {reward:.4f}")
        trajs.append(tr)
    return DemonstrationSet(trajs)
