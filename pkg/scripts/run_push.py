"""Pushing: interpolation at roll-out 0 and adaptation to the held-out arc target."""

import dataclasses

from _common import dump, parser
from acnmp.config import preset
from acnmp.experiments import adapt, fit, make_demos, make_env, push_interpolation_rewards, push_midpoints


def main():
    args = parser(__doc__, "runs/push").parse_args()
    cfg = preset("push")
    fitted = fit(cfg, make_demos("push", cfg.train.n_demos, 0))
    interp = push_interpolation_rewards(fitted.model, push_midpoints())
    env = make_env("push")
    runs = []
    for seed in range(args.seeds):
        res = adapt(fitted, env, dataclasses.replace(cfg.adapt, seed=seed))
        runs.append({"seed": seed, "success": res.success, "rollouts": res.rollouts_used,
                     "best_reward": res.best_reward})
        print(runs[-1])
    dump(args.out, "push.json", {"interpolation_rewards": interp.tolist(), "held_out_target": env.params,
                                 "runs": runs})


if __name__ == "__main__":
    main()
