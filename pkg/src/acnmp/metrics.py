"""Trajectory comparison metrics."""

from __future__ import annotations

import numpy as np
from sklearn.metrics import silhouette_samples, silhouette_score

from .cnmp import Trajectory


def dtw_distance(a, b) -> float:
    """Dynamic time warping cost between two point sequences.

    ``a`` and ``b`` are ``(n, d)`` / ``(m, d)`` arrays (1-D inputs are treated
    as ``d = 1``). Local cost is the Euclidean distance; the accumulated cost
    is normalised by ``n + m``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        prev = acc[i - 1]
        diag_up = np.minimum(prev[:-1], prev[1:]) + cost[i - 1]
        row = acc[i]
        for j in range(1, m + 1):
            left = row[j - 1] + cost[i - 1, j - 1]
            row[j] = diag_up[j - 1] if diag_up[j - 1] < left else left
    return float(acc[n, m] / (n + m))


def path_points(traj: Trajectory, n=100) -> np.ndarray:
    """``(t, values...)`` samples on a uniform grid, for shape comparison."""
    t = np.linspace(traj.times[0], traj.times[-1], n)
    return np.hstack([t[:, None], traj.value_at(t)])


def nearest_demo_dtw(traj: Trajectory, demos, n=100) -> float:
    p = path_points(traj, n)
    return min(dtw_distance(p, path_points(d, n)) for d in demos)


def silhouette(points, labels) -> float:
    """Mean silhouette coefficient (Euclidean)."""
    return float(silhouette_score(np.asarray(points, dtype=float), np.asarray(labels)))


def per_cluster_silhouette(points, labels) -> dict:
    """Mean silhouette restricted to each cluster's members."""
    labels = np.asarray(labels)
    samples = silhouette_samples(np.asarray(points, dtype=float), labels)
    return {u: float(samples[labels == u].mean()) for u in np.unique(labels)}
