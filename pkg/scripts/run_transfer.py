"""Button-task transfer: aligned pair against from-scratch and non-aligned controls."""

import numpy as np

from _common import dump, parser
from acnmp.config import preset
from acnmp.experiments import transfer_setup, transfer_trial


def main():
    p = parser(__doc__, "runs/transfer")
    p.add_argument("--steps", type=int, help="joint training steps")
    p.set_defaults(seeds=10)
    args = p.parse_args()
    src, tgt = preset("transfer3"), preset("transfer4")
    setups = {"aligned": transfer_setup(src, tgt, 0, steps=args.steps),
              "non_aligned": transfer_setup(src, tgt, 0, aligned=False, steps=args.steps)}
    arms = {"transfer": (setups["aligned"], "transfer"), "scratch": (setups["aligned"], "scratch"),
            "non_aligned": (setups["non_aligned"], "transfer")}
    out = {}
    for name, (setup, mode) in arms.items():
        trials = [transfer_trial(setup, tgt.adapt, s, mode) for s in range(args.seeds)]
        out[name] = {"iterations": [t["iterations"] for t in trials],
                     "rollouts": [t["rollouts"] for t in trials],
                     "median_rollouts": float(np.median([t["rollouts"] for t in trials])),
                     "curves": [t["curve"] for t in trials]}
        print(name, out[name]["iterations"], out[name]["median_rollouts"])
    dump(args.out, "transfer.json", out)


if __name__ == "__main__":
    main()
