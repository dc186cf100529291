"""Planar serial arms: forward kinematics and path-following inverse kinematics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PlanarArm:
    link_lengths: tuple

    def __post_init__(self):
        if any(l <= 0 for l in self.link_lengths):
            raise ValueError("link lengths must be positive")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))


def fk_planar(arm: PlanarArm, joint_angles) -> tuple[np.ndarray, np.ndarray]:
    """End-effector position and all joint positions (base first).

    ``joint_angles`` may be ``(dof,)`` or ``(T, dof)``; outputs gain the same
    leading axis.
    """
    q = np.asarray(joint_angles, dtype=float)
    if q.shape[-1] != arm.dof:
        raise ValueError(f"expected {arm.dof} joint angles, got {q.shape[-1]}")
    cum = np.cumsum(q, axis=-1)
    lengths = np.asarray(arm.link_lengths)
    steps = np.stack([lengths * np.cos(cum), lengths * np.sin(cum)], axis=-1)
    joints = np.cumsum(steps, axis=-2)
    base = np.zeros(q.shape[:-1] + (1, 2))
    joints = np.concatenate([base, joints], axis=-2)
    return joints[..., -1, :], joints


def end_effector(arm: PlanarArm, joint_angles) -> np.ndarray:
    return fk_planar(arm, joint_angles)[0]


def jacobian(arm: PlanarArm, q) -> np.ndarray:
    cum = np.cumsum(q)
    lengths = np.asarray(arm.link_lengths)
    dx = -lengths * np.sin(cum)
    dy = lengths * np.cos(cum)
    # column i sums the contributions of links i..n-1
    return np.stack([np.cumsum(dx[::-1])[::-1], np.cumsum(dy[::-1])[::-1]])


def ik_track(arm: PlanarArm, path, q0, rest=None, damping=1e-3, null_gain=0.1, iters=50, tol=1e-9):
    """Follow a Cartesian ``path`` (T, 2) with damped least squares.

    Each sample is solved starting from the previous solution, so the joint
    trajectory stays on one branch. A small null-space pull toward ``rest``
    keeps redundant arms away from awkward postures.
    """
    path = np.asarray(path, dtype=float)
    q = np.asarray(q0, dtype=float).copy()
    rest = q.copy() if rest is None else np.asarray(rest, dtype=float)
    out = np.empty((len(path), arm.dof))
    eye2 = np.eye(2)
    for k, target in enumerate(path):
        for _ in range(iters):
            err = target - end_effector(arm, q)
            J = jacobian(arm, q)
            JJt = J @ J.T + damping * eye2
            J_pinv = J.T @ np.linalg.solve(JJt, eye2)
            null = np.eye(arm.dof) - J_pinv @ J
            q = q + J_pinv @ err + null_gain * null @ (rest - q)
            if err @ err < tol:
                break
        out[k] = q
    return out


def min_jerk(s):
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return 10 * s**3 - 15 * s**4 + 6 * s**5


def waypoint_path(points, times, t):
    """Minimum-jerk interpolation through ``points`` reached at ``times``."""
    points = np.asarray(points, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.repeat(points[:1], len(t), axis=0)
    for (p0, p1), (t0, t1) in zip(zip(points[:-1], points[1:]), zip(times[:-1], times[1:])):
        s = min_jerk((t - t0) / (t1 - t0))
        seg = (t >= t0)
        out[seg] = p0 + (p1 - p0) * s[seg, None]
    return out
