from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acnmp.cnmp import Trajectory
from acnmp.metrics import dtw_distance, nearest_demo_dtw, per_cluster_silhouette, silhouette

seqs = st.lists(st.floats(-10, 10), min_size=1, max_size=7)


def dtw_oracle(a, b):
    @lru_cache(maxsize=None)
    def c(i, j):
        d = abs(a[i] - b[j])
        if i == 0 and j == 0:
            return d
        best = min(c(i - 1, j) if i else np.inf, c(i, j - 1) if j else np.inf,
                   c(i - 1, j - 1) if i and j else np.inf)
        return d + best

    return c(len(a) - 1, len(b) - 1) / (len(a) + len(b))


@settings(max_examples=100)
@given(seqs, seqs)
def test_dtw_matches_recursive_oracle(a, b):
    assert dtw_distance(a, b) == pytest.approx(dtw_oracle(tuple(a), tuple(b)), rel=1e-9, abs=1e-12)


@given(seqs, seqs)
def test_dtw_symmetric_and_zero_on_self(a, b):
    assert dtw_distance(a, a) == 0.0
    assert dtw_distance(a, b) == pytest.approx(dtw_distance(b, a), rel=1e-12, abs=1e-12)


def test_dtw_tolerates_time_warps():
    t = np.linspace(0, 1, 60)
    a = np.sin(np.pi * t)
    warped = np.sin(np.pi * t**1.3)
    shifted = a + 0.3
    assert dtw_distance(a, warped) < dtw_distance(a, shifted)


def test_nearest_demo_dtw_picks_closest():
    t = np.linspace(0, 1, 30)
    demos = [Trajectory(f"d{h}", [h], t, h * t) for h in (0.0, 1.0, 2.0)]
    probe = Trajectory("p", [1.0], t, 1.05 * t)
    assert nearest_demo_dtw(probe, demos) == pytest.approx(nearest_demo_dtw(probe, demos[1:2]))


def test_silhouette_separated_and_mixed():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(5, 0.1, (20, 2))])
    labels = ["a"] * 20 + ["b"] * 20
    assert silhouette(pts, labels) > 0.9
    per = per_cluster_silhouette(pts, labels)
    assert set(per) == {"a", "b"} and min(per.values()) > 0.9
    mixed = rng.permutation(labels)
    assert silhouette(pts, mixed) < 0.1
