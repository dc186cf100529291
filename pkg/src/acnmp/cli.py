"""Command-line driver.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 adaptation
budget exhausted without success. Every failure prints one line
``error[CODE]: message`` to standard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .autodiff import AdamState, NumericError, RejectedInput
from .cnmp import CNMPModel, DemonstrationSet, reconstruction_error
from .config import ConfigError
from .envs.push import PlanError
from .plotting import overlay_svg, write_curve_csv

EXIT_CONFIG, EXIT_DATA, EXIT_BUDGET = 2, 3, 4


class CLIError(Exception):
    def __init__(self, code: int, tag: str, message: str):
        super().__init__(message)
        self.code, self.tag = code, tag


def _config(args) -> cfgmod.ExperimentConfig:
    spec = args.config
    if spec is None:
        raise CLIError(EXIT_CONFIG, "E_CONFIG", "--config is required (a file or a preset name)")
    if Path(spec).is_file():
        cfg = cfgmod.load(spec)
    else:
        cfg = cfgmod.preset(spec)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed, adapt=dataclasses.replace(cfg.adapt, seed=args.seed))
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _demos(path) -> DemonstrationSet:
    if path is None:
        raise CLIError(EXIT_DATA, "E_DATA", "--demos is required")
    return DemonstrationSet.load(path)


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_adam(path, adam: AdamState) -> None:
    np.savez(path, m=adam.first_moment, v=adam.second_moment, step=adam.step_count,
             hyper=np.array([adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon]))


def load_adam(path) -> AdamState:
    z = np.load(path)
    lr, b1, b2, eps = z["hyper"]
    return AdamState(z["m"], z["v"], int(z["step"]), float(lr), float(b1), float(b2), float(eps))


# -- commands ----------------------------------------------------------------


def cmd_demo_gen(args) -> int:
    from .experiments import make_demos
    from .envs import button

    out = Path(args.out)
    if args.env == "button":
        from .transfer import save_pairs

        rng = np.random.default_rng(args.seed or 0)
        src, tgt = button.proxy_pairs(max(1, args.n // len(button.PROXY_FAMILIES)), rng, n_target=120)
        save_pairs(out, src, tgt)
        return 0
    demos = make_demos(args.env, args.n, args.seed or 0, aligned=not args.unaligned)
    out.parent.mkdir(parents=True, exist_ok=True)
    demos.save(out)
    _write_json(str(out) + ".manifest.json", {"env": args.env, "n": len(demos), "seed": args.seed or 0,
                                              "aligned": not args.unaligned, "ids": [tr.id for tr in demos]})
    return 0


def cmd_train(args) -> int:
    from .experiments import fit

    cfg = _config(args)
    demos = _demos(args.demos)
    out = _out(args)
    t0 = time.time()
    fitted = fit(cfg, demos)
    fitted.model.save(out / "model.txt")
    save_adam(out / "adam.npz", fitted.adam)
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        w.writerows(fitted.history)
    cfgmod.save(cfg, out / "config.ini")
    _write_json(out / "run.json", {"command": "train", "config_digest": cfg.digest(), "seed": cfg.seed,
                                   "final_loss": fitted.history[-1][1] if fitted.history else None,
                                   "wall_clock": time.time() - t0})
    return 0


def cmd_adapt(args) -> int:
    from .experiments import Fitted, adapt, make_env

    cfg = _config(args)
    if args.model is None:
        raise CLIError(EXIT_DATA, "E_DATA", "--model is required")
    model = CNMPModel.load(args.model)
    demos = _demos(args.demos)
    adam_path = Path(args.model).with_name("adam.npz")
    adam = load_adam(adam_path) if adam_path.exists() else model.new_adam(cfg.adapt.sl_learning_rate)
    ac = cfg.adapt
    if args.sl_steps is not None:
        ac = dataclasses.replace(ac, interleave_ratio=(ac.interleave_ratio[0], args.sl_steps))
    if args.max_rollouts is not None:
        ac = dataclasses.replace(ac, max_rollouts=args.max_rollouts)
    params = args.env_params if args.env_params is not None else cfg.env_params
    env = make_env(cfg.env, params)
    out = _out(args)
    t0 = time.time()
    res = adapt(Fitted(model, adam, demos), env, ac)
    res.model.save(out / "model.txt")
    res.write_metrics(out / "metrics.csv")
    DemonstrationSet([res.solution]).save(out / "solution.jsonl")
    demos.save(out / "demos.jsonl")
    with open(out / "iterations.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(res.iterations[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(res.iterations)
    _write_json(out / "run.json", {"command": "adapt", "config_digest": cfg.digest(), "seed": ac.seed,
                                   "env": cfg.env, "env_params": list(map(float, env.params)),
                                   "success": bool(res.success), "rollouts": res.rollouts_used,
                                   "best_reward": res.best_reward, "wall_clock": time.time() - t0})
    if not res.success:
        raise CLIError(EXIT_BUDGET, "E_BUDGET",
                       f"no success after {res.rollouts_used} roll-outs (best reward {res.best_reward:.4f})")
    return 0


def cmd_transfer(args) -> int:
    from . import transfer
    from .experiments import transfer_setup, transfer_trial

    cfg = _config(args)
    source_cfg = cfgmod.preset("transfer3")
    if args.pairs is None:
        raise CLIError(EXIT_DATA, "E_DATA", "--pairs DIR with a pairing manifest is required")
    pairs = transfer.load_pairs(args.pairs)
    proxy = (DemonstrationSet([p.source_traj for p in pairs]), DemonstrationSet([p.target_traj for p in pairs]))
    out = _out(args)
    t0 = time.time()
    setup = transfer_setup(source_cfg, cfg, cfg.seed, aligned=not args.no_align, steps=args.steps, proxy=proxy)
    hist = setup.history
    trial = transfer_trial(setup, cfg.adapt, cfg.seed, "scratch" if args.scratch else "transfer")
    with open(out / "success_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "success_rate", "best_success_rate"])
        w.writerows(trial["curve"])
    with open(out / "joint_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss_source", "loss_target", "loss_align"])
        w.writerows(hist)
    _write_json(out / "run.json", {"command": "transfer", "config_digest": cfg.digest(), "seed": cfg.seed,
                                   "aligned": not args.no_align, "mode": "scratch" if args.scratch else "transfer",
                                   "negative_control": bool(args.no_align),
                                   "iterations_to_full_success": trial["iterations"],
                                   "rollouts": trial["rollouts"], "wall_clock": time.time() - t0})
    if trial["iterations"] is None:
        raise CLIError(EXIT_BUDGET, "E_BUDGET", f"no fully successful iteration in {trial['rollouts']} roll-outs")
    return 0


def cmd_eval(args) -> int:
    if args.model is None:
        raise CLIError(EXIT_DATA, "E_DATA", "--model is required")
    model = CNMPModel.load(args.model)
    demos = _demos(args.demos)
    errs = reconstruction_error(model, demos, args.policy)
    rows = sorted(errs.items())
    if args.out:
        out = _out(args)
        with open(out / "eval.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trajectory_id", "mean_abs_error"])
            w.writerows(rows)
    for tid, e in rows:
        print(f"{tid}\t{e:.6g}")
    print(f"mean\t{np.mean([e for _, e in rows]):.6g}")
    return 0


def cmd_export_latent(args) -> int:
    from .experiments import latent_table

    if args.model is None:
        raise CLIError(EXIT_DATA, "E_DATA", "--model is required")
    model = CNMPModel.load(args.model)
    demos = _demos(args.demos)
    rng = np.random.default_rng(args.seed or 0)
    rows = latent_table(model, demos, args.per_traj, rng)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectory_id", "t"] + [f"l{k}" for k in range(model.L)])
        for tid, t, z in rows:
            w.writerow([tid, repr(t)] + [repr(float(v)) for v in z])
    return 0


def cmd_plot(args) -> int:
    run = Path(args.run)
    out = _out(args)
    made = 0
    if (run / "solution.jsonl").exists() and (run / "demos.jsonl").exists():
        info = json.loads((run / "run.json").read_text()) if (run / "run.json").exists() else {}
        demos = DemonstrationSet.load(run / "demos.jsonl")
        sol = DemonstrationSet.load(run / "solution.jsonl")[0]
        cond = None
        if info.get("env") == "viapoint2d":
            cond = tuple(info["env_params"])
        (out / "overlay.svg").write_text(overlay_svg(demos, sol, cond))
        made += 1
    if (run / "curve.json").exists():
        curve = json.loads((run / "curve.json").read_text())
        write_curve_csv(out / "error_vs_trajectories.csv",
                        [(r["trajectories"], r["mean_test_error"]) for r in curve["rows"]])
        made += 1
    if not made:
        raise CLIError(EXIT_DATA, "E_DATA", f"no plottable series in {run}")
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acnmp", description="Adaptive conditional neural movement primitives")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        if "config" in names:
            sp.add_argument("--config", help="config file or preset name")
        if "seed" in names:
            sp.add_argument("--seed", type=int)
        if "out" in names:
            sp.add_argument("--out", required=True)
        if "demos" in names:
            sp.add_argument("--demos")
        if "model" in names:
            sp.add_argument("--model")

    sp = sub.add_parser("demo-gen", help="generate a demonstration dataset")
    common(sp, "seed", "out")
    sp.add_argument("--env", required=True)
    sp.add_argument("--n", type=int, default=6)
    sp.add_argument("--unaligned", action="store_true", help="independent non-uniform time grids")
    sp.set_defaults(func=cmd_demo_gen)

    sp = sub.add_parser("train", help="train a model on demonstrations")
    common(sp, "config", "seed", "out", "demos")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("adapt", help="adapt a trained model to a new task instance")
    common(sp, "config", "seed", "out", "demos", "model")
    sp.add_argument("--env-params", type=float, nargs="+")
    sp.add_argument("--sl-steps", type=int, help="supervised steps per RL step (0 = RL only)")
    sp.add_argument("--max-rollouts", type=int)
    sp.set_defaults(func=cmd_adapt)

    sp = sub.add_parser("transfer", help="joint training on proxy pairs, then transfer to the button task")
    common(sp, "config", "seed", "out")
    sp.add_argument("--pairs", help="directory with source.jsonl, target.jsonl and pairs.jsonl")
    sp.add_argument("--steps", type=int, help="joint training steps")
    sp.add_argument("--no-align", action="store_true", help="negative control: drop the alignment term")
    sp.add_argument("--scratch", action="store_true", help="from-scratch control: ignore the source")
    sp.set_defaults(func=cmd_transfer)

    sp = sub.add_parser("eval", help="reconstruction error of a model on demonstrations")
    common(sp, "demos", "model")
    sp.add_argument("--out")
    sp.add_argument("--policy", default="first")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("export-latent", help="write per-observation latent vectors as CSV")
    common(sp, "seed", "out", "demos", "model")
    sp.add_argument("--per-traj", type=int)
    sp.set_defaults(func=cmd_export_latent)

    sp = sub.add_parser("plot", help="static SVG/CSV figure data from a run directory")
    common(sp, "out")
    sp.add_argument("--run", required=True)
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        err = exc
    except ConfigError as exc:
        err = CLIError(EXIT_CONFIG, "E_CONFIG", str(exc))
    except FileNotFoundError as exc:
        err = CLIError(EXIT_DATA, "E_DATA", f"file not found: {exc.filename}" if exc.filename else str(exc))
    except (RejectedInput, PlanError, NumericError, json.JSONDecodeError, KeyError) as exc:
        err = CLIError(EXIT_DATA, "E_DATA", str(exc))
    except ValueError as exc:
        err = CLIError(EXIT_DATA, "E_DATA", str(exc))
    msg = " ".join(str(err).split())
    print(f"error[{err.tag}]: {msg}", file=sys.stderr)
    return err.code


if __name__ == "__main__":
    sys.exit(main())
