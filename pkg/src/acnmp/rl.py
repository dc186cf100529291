"""Policy-gradient adaptation of a CNMP with interleaved demonstration replay.

The decoder's Gaussian over each queried time is the stochastic policy. A
roll-out samples every queried point independently, the environment scores
the whole trajectory once, and the likelihood-ratio gradient with a
mean-reward baseline updates the same parameters the supervised loss trains.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, NumericError, RejectedInput, adam_step, effective_sigma, gaussian_nll_grad
from .cnmp import (
    CaseBatch,
    CaseSampler,
    CNMPModel,
    DemonstrationSet,
    Trajectory,
    default_grid,
    generate,
    predict,
    reconstruction_error,
    sl_step,
)

METRIC_COLUMNS = ("rollout_index", "reward", "best_reward", "pg_loss", "sl_loss", "retention_error")


@dataclass
class Episode:
    conditioning: list
    gamma: np.ndarray
    times: np.ndarray
    actions: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    exploration_scale: float
    reward: float | None = None

    def trajectory(self, tid="rollout") -> Trajectory:
        return Trajectory(tid, self.gamma, self.times, self.actions)

    def context_key(self):
        rows = tuple((o.t, o.gamma.tobytes(), o.sm.tobytes()) for o in self.conditioning)
        return rows, self.gamma.tobytes(), self.times.tobytes(), self.exploration_scale


@dataclass
class AdaptConfig:
    rollouts_per_update: int = 5
    max_rollouts: int = 200
    success_threshold: float | None = None
    interleave_ratio: tuple = (1, 1)
    exploration_scale: float = 1.0
    seed: int = 0
    learning_rate: float = 1e-3
    sl_learning_rate: float = 1e-4
    sl_batch_size: int = 16
    query_points: int = 200
    solution_points: int | None = None
    track_retention: bool = True
    retention_policy: str = "first"
    stop_when: str = "mean"

    def __post_init__(self):
        rl, sl = self.interleave_ratio
        if self.rollouts_per_update < 1 or self.max_rollouts < 1 or rl < 1 or sl < 0:
            raise RejectedInput("roll-out counts and RL steps must be >= 1, SL steps >= 0")
        if self.exploration_scale <= 0:
            raise RejectedInput("exploration_scale must be positive")
        if self.stop_when not in ("mean", "batch"):
            raise RejectedInput("stop_when must be 'mean' or 'batch'")


@dataclass
class PGDiagnostics:
    loss: float
    grad_norm: float
    degenerate: bool
    applied: bool


@dataclass
class AdaptResult:
    model: CNMPModel
    solution: Trajectory
    success: bool
    best_reward: float
    rollouts_used: int
    log: list = field(default_factory=list)
    iterations: list = field(default_factory=list)

    def write_metrics(self, path) -> None:
        write_metrics_csv(path, self.log)


def sample_rollout(model: CNMPModel, conditioning, gamma, query_times, exploration_scale, rng) -> Episode:
    """Sample one action per queried time from the scaled decoder Gaussian."""
    times = np.asarray(query_times, dtype=float)
    mu, raw = predict(model, conditioning, gamma, times)
    sigma = effective_sigma(raw)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise NumericError("non-finite policy output; roll-out aborted")
    actions = mu + exploration_scale * sigma * rng.standard_normal(mu.shape)
    return Episode(list(conditioning), np.atleast_1d(np.asarray(gamma, dtype=float)), times, actions,
                   mu, sigma, float(exploration_scale))


def advantages(rewards, normalize=True) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    adv = r - r.mean()
    if normalize:
        adv = adv / (r.std() + 1e-8)
    return adv


def pg_gradient(model: CNMPModel, episodes, normalize=True):
    """Surrogate loss ``mean_e adv_e * sum_t -log pi(a_et)`` and its gradient.

    Episodes sharing a context reuse one forward pass. Returns
    ``(loss, grad, degenerate)``; a degenerate batch (no reward spread) yields a
    zero gradient.
    """
    if not episodes:
        raise RejectedInput("pg_update needs at least one episode")
    rewards = [ep.reward for ep in episodes]
    if any(r is None or not np.isfinite(r) for r in rewards):
        raise RejectedInput("every episode needs a finite reward")
    adv = advantages(rewards, normalize)
    grad = np.zeros(model.n_params)
    if np.all(adv == 0.0):
        return 0.0, grad, True
    groups: dict = {}
    for ep, a in zip(episodes, adv):
        groups.setdefault(ep.context_key(), []).append((ep, a))
    n = len(episodes)
    loss = 0.0
    for members in groups.values():
        ep0 = members[0][0]
        batch = CaseBatch(
            np.stack([model.obs_row(o) for o in ep0.conditioning]),
            np.zeros(len(ep0.conditioning), dtype=int),
            model.query_rows(ep0.times, ep0.gamma),
            np.zeros(len(ep0.times), dtype=int),
            None,
            1,
        )
        cache = model.forward_batch(batch)
        g_mu = np.zeros_like(cache.mu)
        g_raw = np.zeros_like(cache.sigma_raw)
        for ep, a in members:
            nll, d_mu, d_raw = gaussian_nll_grad(cache.mu, cache.sigma_raw, ep.actions, scale=ep.exploration_scale)
            loss += a * float(nll.sum()) / n
            g_mu += (a / n) * d_mu
            g_raw += (a / n) * d_raw
        grad += model.backward_batch(cache, g_mu, g_raw)
    return loss, grad, False


def pg_update(model: CNMPModel, episodes, adam: AdamState, normalize=True) -> PGDiagnostics:
    """One Adam step on the policy-gradient surrogate (in place on ``model``)."""
    loss, grad, degenerate = pg_gradient(model, episodes, normalize)
    if degenerate:
        return PGDiagnostics(0.0, 0.0, True, False)
    applied = adam_step(model.params, grad, adam)
    return PGDiagnostics(loss, float(np.linalg.norm(grad)), False, applied)


def rollout_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def interleaved_adapt(model: CNMPModel, demos: DemonstrationSet | None, env, conditioning, config: AdaptConfig,
                      gamma=None, query_times=None, sl_adam: AdamState | None = None,
                      retention_demos=None) -> AdaptResult:
    """Alternate policy-gradient batches with supervised replay until success.

    ``model`` is not modified; the adapted copy is returned. Policy-gradient
    and supervised steps keep separate Adam states; pass ``sl_adam`` to continue
    the optimizer state of the original training run. With
    ``interleave_ratio[1] == 0`` (or no demos) this is plain RL fine-tuning.

    With ``stop_when="mean"`` the run ends once the mean trajectory succeeds;
    with ``"batch"`` it ends once every roll-out of an iteration succeeds.
    """
    model = model.copy()
    gamma = env.gamma if gamma is None else np.atleast_1d(np.asarray(gamma, dtype=float))
    times = default_grid(config.query_points) if query_times is None else np.asarray(query_times, dtype=float)
    threshold = env.success_threshold if config.success_threshold is None else config.success_threshold
    pg_adam = AdamState.zeros(model.n_params, learning_rate=config.learning_rate)
    sl_adam = sl_adam.copy() if sl_adam is not None else AdamState.zeros(model.n_params, learning_rate=config.sl_learning_rate)
    rl_steps, sl_steps = config.interleave_ratio
    sampler = CaseSampler(model, demos) if demos is not None and sl_steps > 0 else None
    sl_rng = np.random.default_rng([int(config.seed), 1 << 30])
    retention_demos = demos if retention_demos is None else retention_demos

    sol_times = times if config.solution_points is None else default_grid(config.solution_points)

    def mean_trajectory():
        return generate(model, conditioning, gamma, sol_times, tid="solution")

    def retention():
        if not config.track_retention or retention_demos is None:
            return float("nan")
        errs = reconstruction_error(model, retention_demos, config.retention_policy)
        return float(np.mean(list(errs.values())))

    solution = mean_trajectory()
    best = env.evaluate(solution)
    log: list = []
    iterations = [{"iteration": 0, "rollouts": 0, "best_reward": best, "success_rate": float(best >= threshold),
                   "deterministic_reward": best}]
    used = 0

    def done():
        if config.stop_when == "batch":
            return len(iterations) > 1 and iterations[-1]["success_rate"] == 1.0
        return best >= threshold

    while not done() and used < config.max_rollouts:
        pg_loss, batch_rows, n_success, n_batch = 0.0, [], 0, 0
        for _ in range(rl_steps):
            k = min(config.rollouts_per_update, config.max_rollouts - used)
            if k <= 0:
                break
            episodes = []
            for _ in range(k):
                ep = sample_rollout(model, conditioning, gamma, times, config.exploration_scale,
                                    rollout_rng(config.seed, used))
                ep.reward = env.evaluate(ep.trajectory())
                episodes.append(ep)
                batch_rows.append((used, ep.reward))
                n_success += ep.reward >= threshold
                used += 1
            n_batch += k
            if k >= 2:
                pg_loss = pg_update(model, episodes, pg_adam).loss
        sl_loss = float("nan")
        for _ in range(sl_steps if sampler is not None else 0):
            sl_loss = sl_step(model, sampler, sl_adam, sl_rng, config.sl_batch_size)
        current = mean_trajectory()
        reward = env.evaluate(current)
        if reward > best:
            best, solution = reward, current
        ret = retention()
        for idx, r in batch_rows:
            log.append({"rollout_index": idx, "reward": r, "best_reward": best, "pg_loss": pg_loss,
                        "sl_loss": sl_loss, "retention_error": ret})
        iterations.append({"iteration": len(iterations), "rollouts": used, "best_reward": best,
                           "success_rate": n_success / max(n_batch, 1), "deterministic_reward": reward})
    return AdaptResult(model, solution, done(), best, used, log, iterations)


def assimilate(demos: DemonstrationSet, solution: Trajectory) -> DemonstrationSet:
    """Add an RL solution to the demonstration set."""
    if solution.gamma_width != demos.gamma_width:
        raise RejectedInput(f"solution gamma width {solution.gamma_width} != {demos.gamma_width}")
    if solution.sm_width != demos.sm_width:
        raise RejectedInput(f"solution sm width {solution.sm_width} != {demos.sm_width}")
    ids = {tr.id for tr in demos}
    tid = solution.id
    k = 0
    while tid in ids:
        k += 1
        tid = f"{solution.id}-{k}"
    sol = Trajectory(tid, solution.task_params, solution.times, solution.values)
    return DemonstrationSet(list(demos) + [sol])


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in METRIC_COLUMNS})
