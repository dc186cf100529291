"""Wall avoidance self-improvement: held-out error as solved environments are assimilated."""

from _common import dump, parser
from acnmp.config import preset
from acnmp.experiments import wall_self_improvement
from acnmp.plotting import write_curve_csv


def main():
    p = parser(__doc__, "runs/wall")
    p.add_argument("--new", type=int, default=100, help="environments solved and assimilated")
    args = p.parse_args()
    res = wall_self_improvement(preset("wall"), n_new=args.new)
    rows = [{"rollouts": r, "trajectories": n, "mean_test_error": e} for r, n, e in res.curve]
    for row in rows:
        print(row)
    dump(args.out, "curve.json", {"rows": rows, "improvement": res.improvement, "successes": res.successes,
                                  "seconds": res.seconds})
    write_curve_csv(f"{args.out}/error_vs_trajectories.csv", [(r["trajectories"], r["mean_test_error"]) for r in rows])


if __name__ == "__main__":
    main()
