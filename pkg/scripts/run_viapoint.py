"""Via-point experiment: fidelity, extrapolation, adaptation with and without SL, retention."""

import numpy as np

from _common import dump, parser
from acnmp.cnmp import DemonstrationSet, reconstruction_error
from acnmp.config import preset
from acnmp.envs import viapoint
from acnmp.experiments import assimilate_and_train, fit, make_demos, viapoint_fidelity, viapoint_run


def main():
    args = parser(__doc__, "runs/viapoint").parse_args()
    cfg = preset("viapoint")
    fitted = fit(cfg, make_demos("viapoint2d", cfg.train.n_demos, 0))
    fidelity = viapoint_fidelity(fitted.model, np.linspace(*viapoint.HEIGHT_RANGE, 31))
    before = viapoint_fidelity(fitted.model, [cfg.env_params[1]])[0]
    runs = {"acnmp": [], "rl_only": []}
    for seed in range(args.seeds):
        for mode in runs:
            r = viapoint_run(cfg, fitted, seed, rl_only=mode == "rl_only")
            runs[mode].append({"seed": seed, "rollouts": r["rollouts"], "dtw": r["dtw"], "constraint": r["constraint"]})
            print(mode, runs[mode][-1])
            if mode == "acnmp" and seed == 0:
                first = r["result"]
    pre = reconstruction_error(fitted.model, fitted.demos)
    post = reconstruction_error(assimilate_and_train(fitted, first, 5000, lr=1e-4).model, fitted.demos)
    summary = {
        "in_range_max_error": fidelity.max(),
        "extrapolation_error_before": before,
        "runs": runs,
        "retention_ratio": np.mean(list(post.values())) / np.mean(list(pre.values())),
        "retention_max": max(post.values()),
    }
    dump(args.out, "summary.json", summary)
    fitted.demos.save(f"{args.out}/demos.jsonl")
    DemonstrationSet([first.solution]).save(f"{args.out}/solution.jsonl")
    dump(args.out, "run.json", {"env": "viapoint2d", "env_params": list(cfg.env_params), "config_digest": cfg.digest()})


if __name__ == "__main__":
    main()
