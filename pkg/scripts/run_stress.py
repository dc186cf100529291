"""Extrapolation stress: adapt to via-points ever farther above the demonstrations."""

import dataclasses

import numpy as np

from _common import dump, parser
from acnmp.config import preset
from acnmp.experiments import fit, make_demos, viapoint_run


def main():
    p = parser(__doc__, "runs/stress")
    p.add_argument("--heights", type=float, nargs="+", default=[0.8, 1.0, 1.2, 1.4])
    args = p.parse_args()
    cfg = preset("viapoint")
    cfg = cfg.replace(adapt=dataclasses.replace(cfg.adapt, max_rollouts=1000))
    fitted = fit(cfg, make_demos("viapoint2d", cfg.train.n_demos, 0))
    rows = []
    for h in args.heights:
        runs = [viapoint_run(cfg, fitted, s, height=h) for s in range(args.seeds)]
        rows.append({"height": h, "median_dtw": float(np.median([r["dtw"] for r in runs])),
                     "worst_constraint": max(r["constraint"] for r in runs),
                     "rollouts": [r["rollouts"] for r in runs]})
        print(rows[-1])
    dump(args.out, "stress.json", {"rows": rows})


if __name__ == "__main__":
    main()
