"""End-to-end experiment drivers shared by the CLI, scripts and acceptance tests."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState
from .cnmp import (
    CNMPModel,
    DemonstrationSet,
    ObservationPoint,
    Trajectory,
    build_model,
    default_grid,
    encode,
    generate,
    reconstruction_error,
    train,
)
from .config import ConfigError, ExperimentConfig, preset
from .envs import button, push, viapoint, wall
from .metrics import nearest_demo_dtw, per_cluster_silhouette, silhouette
from .rl import AdaptConfig, AdaptResult, assimilate, interleaved_adapt

ENV_NAMES = ("viapoint2d", "push", "wall", "button")


@dataclass
class Fitted:
    """A trained model with the optimizer state and data that produced it."""

    model: CNMPModel
    adam: AdamState
    demos: DemonstrationSet
    history: list = field(default_factory=list)

    def copy(self) -> "Fitted":
        return Fitted(self.model.copy(), self.adam.copy(), self.demos, list(self.history))


# -- environments and data ---------------------------------------------------


def make_env(name: str, params=()):
    """Environment instance from a name and its parameter list."""
    params = tuple(float(p) for p in params)
    if name == "viapoint2d":
        t, v = params if params else (viapoint.VIA_TIME, 1.0)
        return viapoint.ViaPointEnv(t, np.array([v]))
    if name == "push":
        target = params if params else tuple(push.arc_targets()[-1])
        if len(target) != 2:
            raise ConfigError("push needs a 2D target")
        return push.PushEnv(tuple(target))
    if name == "wall":
        if len(params) != 4:
            raise ConfigError("wall needs x_c, y_c, x_g, y_g")
        return wall.WallEnv(*params)
    if name == "button":
        return button.ButtonEnv()
    raise ConfigError(f"unknown environment {name!r}; known: {', '.join(ENV_NAMES)}")


def make_demos(name: str, n: int, seed: int, aligned=True) -> DemonstrationSet:
    rng = np.random.default_rng(seed)
    if name == "viapoint2d":
        times = None if aligned else viapoint.random_time_grid()
        return viapoint.viapoint_demos(n, rng, times=times)
    if name == "push":
        return push.push_demos(push.arc_targets()[:n])
    if name == "wall":
        return wall.wall_demos([wall.sample_wall_env(rng) for _ in range(n)])
    if name == "button":
        return button.proxy_pairs(max(1, n // len(button.PROXY_FAMILIES)), rng)[1]
    raise ConfigError(f"unknown environment {name!r}; known: {', '.join(ENV_NAMES)}")


def fit(cfg: ExperimentConfig, demos: DemonstrationSet, seed=None, encoder=None, **model_kw) -> Fitted:
    """Build the configured model and train it (plus the optional fine-tune phase).

    ``encoder`` overrides the configured encoder widths; ``model_kw`` is
    passed to the model (e.g. ``gamma_in_decoder=False``).
    """
    seed = cfg.seed if seed is None else seed
    if demos.sm_width != cfg.sm_width or demos.gamma_width != cfg.gamma_width:
        raise ConfigError(
            f"demonstrations (D={demos.sm_width}, G={demos.gamma_width}) do not match config "
            f"(D={cfg.sm_width}, G={cfg.gamma_width})"
        )
    model = build_model(demos, encoder or cfg.encoder, cfg.decoder_hidden, seed=seed, **model_kw)
    adam = model.new_adam(cfg.train.learning_rate)
    rng = np.random.default_rng([seed, 11])
    tc = cfg.train
    hist = train(model, demos, tc.steps, rng, adam, tc.batch_size, log_every=tc.log_every)
    if tc.finetune_steps:
        adam.learning_rate = tc.finetune_learning_rate
        more = train(model, demos, tc.finetune_steps, rng, adam, tc.batch_size, log_every=tc.log_every)
        hist += [(s + tc.steps, l) for s, l in more]
    return Fitted(model, adam, demos, hist)


def adapt(fitted: Fitted, env, config: AdaptConfig, conditioning=None, rl_only=False) -> AdaptResult:
    """Interleaved adaptation continuing the fit's SL optimizer state."""
    if rl_only:
        config = dataclasses.replace(config, interleave_ratio=(config.interleave_ratio[0], 0))
    sl_adam = fitted.adam.copy()
    sl_adam.learning_rate = config.sl_learning_rate
    cond = env.conditioning() if conditioning is None else conditioning
    return interleaved_adapt(fitted.model, fitted.demos, env, cond, config, sl_adam=sl_adam)


def assimilate_and_train(fitted: Fitted, result: AdaptResult, steps: int, seed=0, lr=None) -> Fitted:
    """Add the RL solution to the data and keep training the adapted model."""
    demos = assimilate(fitted.demos, result.solution)
    model = result.model.copy()
    adam = fitted.adam.copy()
    if lr is not None:
        adam.learning_rate = lr
    train(model, demos, steps, np.random.default_rng([seed, 13]), adam, batch_size=16)
    return Fitted(model, adam, demos, list(fitted.history))


def mean_error(model: CNMPModel, demos, policy="first") -> float:
    return float(np.mean(list(reconstruction_error(model, demos, policy).values())))


# -- via-point ---------------------------------------------------------------


def viapoint_fidelity(model: CNMPModel, heights, via_time=viapoint.VIA_TIME) -> np.ndarray:
    """Via-point error of the generated trajectory for each in-range height."""
    out = []
    for h in heights:
        env = viapoint.ViaPointEnv.at_height(h, via_time)
        out.append(-env.evaluate(generate(model, env.conditioning(), env.gamma)))
    return np.array(out)


def viapoint_run(cfg: ExperimentConfig, fitted: Fitted, seed: int, rl_only=False, height=None) -> dict:
    """Adapt to one extrapolated via-point; report roll-outs and shape distance."""
    env = make_env("viapoint2d", cfg.env_params if height is None else (viapoint.VIA_TIME, height))
    res = adapt(fitted, env, dataclasses.replace(cfg.adapt, seed=seed), rl_only=rl_only)
    return {
        "result": res,
        "success": res.success,
        "rollouts": res.rollouts_used if res.success else None,
        "dtw": nearest_demo_dtw(res.solution, fitted.demos),
        "constraint": -env.evaluate(res.solution),
    }


def latent_table(model: CNMPModel, demos, per_traj=None, rng=None) -> list:
    """``(trajectory_id, t, latent)`` for single observations of each trajectory.

    With ``per_traj`` set, that many observations are drawn per trajectory
    without replacement; otherwise every sample is used.
    """
    rows = []
    for tr in demos:
        idx = np.arange(len(tr))
        if per_traj is not None and per_traj < len(tr):
            idx = np.sort(rng.choice(len(tr), size=per_traj, replace=False))
        for i in idx:
            rows.append((tr.id, float(tr.times[i]), encode(model, tr.observation(int(i)))))
    return rows


def latent_clusters(rows, solution_id: str | None = None) -> dict:
    points = np.array([r[2] for r in rows])
    labels = np.array([r[0] for r in rows])
    out = {"silhouette": silhouette(points, labels), "per_cluster": per_cluster_silhouette(points, labels)}
    if solution_id is not None:
        out["solution"] = out["per_cluster"][solution_id]
    return out


# -- push --------------------------------------------------------------------


def push_midpoints() -> np.ndarray:
    """Targets halfway (in angle) between neighbouring demonstration targets."""
    angles = push.ARC_ANGLES[:9]
    return push.arc_targets(0.5 * (angles[1:] + angles[:-1]))


def push_interpolation_rewards(model: CNMPModel, targets) -> np.ndarray:
    out = []
    for target in targets:
        env = push.PushEnv(tuple(map(float, target)))
        out.append(env.evaluate(generate(model, env.conditioning(), env.gamma)))
    return np.array(out)


# -- wall self-improvement ---------------------------------------------------


def wall_error(model: CNMPModel, envs, n=100) -> float:
    g = default_grid(n)
    return float(np.mean([-e.evaluate(generate(model, e.conditioning(), e.gamma, g)) for e in envs]))


@dataclass
class SelfImprovement:
    initial_error: float
    final_error: float
    curve: list
    rollouts: int
    successes: int
    seconds: float

    @property
    def improvement(self) -> float:
        return 1.0 - self.final_error / self.initial_error


def wall_self_improvement(cfg: ExperimentConfig, n_init=30, n_test=100, n_new=100, post_steps=300,
                          final_steps=5000, eval_every=20, seed=None) -> SelfImprovement:
    """Train on ``n_init`` environments, then adapt to and assimilate ``n_new`` more.

    Each assimilated solution is followed by ``post_steps`` supervised steps
    and the loop ends with ``final_steps`` of consolidation, all at the
    training learning rate. The curve rows are
    ``(rollouts, trajectories, mean_test_error)``.
    """
    seed = cfg.seed if seed is None else seed
    t0 = time.time()
    rng = np.random.default_rng(seed)
    init_envs = [wall.sample_wall_env(rng) for _ in range(n_init)]
    test_envs = [wall.sample_wall_env(rng) for _ in range(n_test)]
    new_envs = [wall.sample_wall_env(rng) for _ in range(n_new)]
    fitted = fit(cfg, wall.wall_demos(init_envs), seed)
    e0 = wall_error(fitted.model, test_envs)
    curve = [(0, n_init, e0)]
    lr = cfg.train.learning_rate
    used = succ = 0
    for i, env in enumerate(new_envs):
        res = adapt(fitted, env, dataclasses.replace(cfg.adapt, seed=seed * 100003 + i))
        used += res.rollouts_used
        succ += res.success
        fitted = assimilate_and_train(fitted, res, post_steps, seed=seed * 100003 + i, lr=lr)
        if (i + 1) % eval_every == 0 or i + 1 == n_new:
            curve.append((used, n_init + i + 1, wall_error(fitted.model, test_envs)))
    if final_steps:
        train(fitted.model, fitted.demos, final_steps, np.random.default_rng([seed, 19]), fitted.adam, batch_size=16)
        curve.append((used, n_init + n_new, wall_error(fitted.model, test_envs)))
    return SelfImprovement(e0, curve[-1][2], curve, used, succ, time.time() - t0)


# -- transfer ----------------------------------------------------------------


@dataclass
class TransferSetup:
    pair: "transfer.PairedModels"
    state: "transfer.JointState"
    source_demos: DemonstrationSet
    target_demos: DemonstrationSet
    source_solution: Trajectory
    history: list


def transfer_setup(source_cfg: ExperimentConfig, target_cfg: ExperimentConfig, seed=0, aligned=True,
                   n_source=200, n_target=120, steps=None, proxy=None) -> TransferSetup:
    """Proxy data for both arms, a source demo of the button task, and a jointly trained pair.

    ``aligned=False`` trains the same pair with the alignment term switched
    off, the negative control. ``proxy`` supplies ready-made
    ``(source_set, target_set)`` proxy demonstrations instead of sampling them.
    """
    from . import transfer

    if source_cfg.encoder[-1] != target_cfg.encoder[-1]:
        raise ConfigError("source and target latent widths differ")
    rng = np.random.default_rng([seed, 17])
    per_family = max(1, target_cfg.train.n_demos // len(button.PROXY_FAMILIES))
    if proxy is None:
        src_set, tgt_set = button.proxy_pairs(per_family, rng, n_source=n_source, n_target=n_target)
    else:
        src_set, tgt_set = proxy
    solution = button.button_demo(button.ButtonEnv(arm=button.SOURCE_ARM), tid="button")
    src = build_model(src_set, source_cfg.encoder, source_cfg.decoder_hidden, seed=2 * seed + 1)
    tgt = build_model(tgt_set, target_cfg.encoder, target_cfg.decoder_hidden, seed=2 * seed + 2)
    pair = transfer.PairedModels(src, tgt)
    state = transfer.joint_state(pair, transfer.pair_demos(src_set, tgt_set), source_extra=[solution],
                                 lr=target_cfg.train.learning_rate)
    weight = target_cfg.train.align_weight if aligned else 0.0
    hist = transfer.joint_train(pair, state, steps or target_cfg.train.steps, rng,
                                batch_size=target_cfg.train.batch_size, align_weight=weight,
                                log_every=target_cfg.train.log_every)
    return TransferSetup(pair, state, src_set, tgt_set, solution, hist)


def transfer_trial(setup: TransferSetup, config: AdaptConfig, seed: int, mode="transfer") -> dict:
    """One adaptation run on the button task.

    ``mode`` is ``"transfer"`` (start from the decoded source solution) or
    ``"scratch"`` (target model conditioned only on its home posture).
    """
    from . import transfer

    config = dataclasses.replace(config, seed=seed)
    env = button.ButtonEnv()
    adam = setup.state.target_adam.copy()
    adam.learning_rate = config.sl_learning_rate
    if mode == "transfer":
        tr = transfer.transfer_adapt(setup.pair, setup.source_solution, env, config, setup.target_demos,
                                     target_adam=adam)
        res, curve = tr.adapt, tr.success_curve
    elif mode == "scratch":
        res = interleaved_adapt(setup.pair.target, setup.target_demos, env, env.conditioning(), config,
                                sl_adam=adam)
        curve = transfer.TransferResult(None, res, []).success_curve
    else:
        raise ConfigError(f"unknown transfer mode {mode!r}")
    full = next((it for it, rate, _ in curve if rate == 1.0), None)
    return {"iterations": full, "rollouts": res.rollouts_used, "curve": curve, "result": res}
