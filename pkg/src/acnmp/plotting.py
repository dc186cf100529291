"""Static figure data: hand-written SVG paths and CSV series."""

from __future__ import annotations

import csv

import numpy as np

WIDTH, HEIGHT, MARGIN = 480, 320, 30
DEMO_COLOR, SOLUTION_COLOR, CONDITION_COLOR = "#7f7f7f", "#d62728", "#1f77b4"


def _xy(traj) -> np.ndarray:
    # one-dimensional trajectories are drawn against time
    if traj.sm_width == 1:
        return np.column_stack([traj.times, traj.values[:, 0]])
    return traj.values[:, :2]


def _path(points, sx, sy) -> str:
    cmds = [f"{'M' if i == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}" for i, (x, y) in enumerate(points)]
    return " ".join(cmds)


def overlay_svg(demos, solution, condition=None) -> str:
    """Demonstrations in grey, the generated trajectory in red, the condition point in blue.

    ``condition`` is an ``(x, y)`` point in the same coordinates as the drawn
    paths (time and value for one-dimensional trajectories).
    """
    series = [_xy(tr) for tr in demos] + [_xy(solution)]
    allp = np.vstack(series + ([np.asarray(condition, dtype=float)[None]] if condition is not None else []))
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def sx(x):
        return MARGIN + (x - lo[0]) / span[0] * (WIDTH - 2 * MARGIN)

    def sy(y):
        return HEIGHT - MARGIN - (y - lo[1]) / span[1] * (HEIGHT - 2 * MARGIN)

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'viewBox="0 0 {WIDTH} {HEIGHT}">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    for tr, pts in zip(demos, series[:-1]):
        lines.append(f'<path class="demo" data-id="{tr.id}" d="{_path(pts, sx, sy)}" '
                     f'fill="none" stroke="{DEMO_COLOR}" stroke-width="1"/>')
    lines.append(f'<path class="generated" data-id="{solution.id}" d="{_path(series[-1], sx, sy)}" '
                 f'fill="none" stroke="{SOLUTION_COLOR}" stroke-width="2"/>')
    if condition is not None:
        cx, cy = condition
        lines.append(f'<circle class="condition" cx="{sx(cx):.2f}" cy="{sy(cy):.2f}" r="4" '
                     f'fill="{CONDITION_COLOR}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_curve_csv(path, rows) -> None:
    """Error against dataset size; ``rows`` are ``(trajectories, mean_test_error)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectories", "mean_test_error"])
        for n, err in rows:
            w.writerow([int(n), repr(float(err))])
