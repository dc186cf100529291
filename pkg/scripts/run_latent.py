"""Latent clusters of a two-unit latent model before and after assimilating an RL solution."""

from pathlib import Path

from _common import dump, parser
from acnmp.config import preset
from acnmp.experiments import assimilate_and_train, fit, latent_clusters, latent_table, make_demos, viapoint_run


def main():
    args = parser(__doc__, "runs/latent").parse_args()
    cfg = preset("viapoint")
    rows = []
    for seed in range(args.seeds):
        fitted = fit(cfg, make_demos("viapoint2d", 6, seed), seed, encoder=(128, 64, 32, 16, 2),
                     gamma_in_decoder=False)
        before = latent_clusters(latent_table(fitted.model, fitted.demos))
        run = viapoint_run(cfg, fitted, seed)
        post = assimilate_and_train(fitted, run["result"], 5000, lr=1e-4)
        after = latent_clusters(latent_table(post.model, post.demos), run["result"].solution.id)
        rows.append({"seed": seed, "silhouette_before": before["silhouette"],
                     "silhouette_after": after["silhouette"], "solution_cluster": after["solution"]})
        print(rows[-1])
        if seed == 0:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            post.model.save(Path(args.out) / "model.txt")
            post.demos.save(Path(args.out) / "demos.jsonl")
    dump(args.out, "latent.json", {"rows": rows})


if __name__ == "__main__":
    main()
