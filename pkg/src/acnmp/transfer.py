"""Skill transfer between two CNMPs through an aligned latent space.

Two models are trained together on proxy demonstrations that both agents
can perform. Besides each model's own likelihood loss, the representations
they compute from matched observation sets of the same proxy trajectory are
pulled together. A source solution can then be encoded by the first model
and decoded by the second one in its own joint space.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, RejectedInput, adam_step, gaussian_nll_grad
from .cnmp import (
    DEFAULT_N_MAX,
    CaseBatch,
    CaseSampler,
    CNMPModel,
    DemonstrationSet,
    Trajectory,
    default_grid,
    predict_from_rep,
    represent,
    train,
)
from .rl import AdaptConfig, AdaptResult, interleaved_adapt


@dataclass
class PairedModels:
    source: CNMPModel
    target: CNMPModel
    aligned_steps: int = 0

    def __post_init__(self):
        if self.source.L != self.target.L:
            raise RejectedInput(f"latent widths differ: {self.source.L} vs {self.target.L}")
        if self.source.G != self.target.G:
            raise RejectedInput(f"task parameter widths differ: {self.source.G} vs {self.target.G}")

    @property
    def latent_width(self) -> int:
        return self.source.L

    def copy(self) -> "PairedModels":
        return PairedModels(self.source.copy(), self.target.copy(), self.aligned_steps)


@dataclass
class PairedDemo:
    source_traj: Trajectory
    target_traj: Trajectory

    def __post_init__(self):
        g1, g2 = self.source_traj.task_params, self.target_traj.task_params
        if g1.shape != g2.shape or not np.array_equal(g1, g2):
            raise RejectedInput(f"paired trajectories disagree on task parameters: {g1} vs {g2}")

    @property
    def gamma(self) -> np.ndarray:
        return self.source_traj.task_params


def pair_demos(source_set: DemonstrationSet, target_set: DemonstrationSet) -> list:
    if len(source_set) != len(target_set):
        raise RejectedInput("paired sets must have the same number of trajectories")
    return [PairedDemo(s, t) for s, t in zip(source_set, target_set)]


def align_loss(r1, r2) -> float:
    """Mean squared difference between two representations."""
    d = np.asarray(r1, dtype=float) - np.asarray(r2, dtype=float)
    return float(np.mean(d * d))


def matched_observations(paired: PairedDemo, fractions):
    """Observation sets read off both trajectories at the same time fractions."""
    src = [paired.source_traj.observation_at(f) for f in fractions]
    tgt = [paired.target_traj.observation_at(f) for f in fractions]
    return src, tgt


@dataclass
class JointState:
    """Optimizer and sampler state for joint training of a pair."""

    source_adam: AdamState
    target_adam: AdamState
    source_sampler: CaseSampler
    target_sampler: CaseSampler
    pairs: list
    history: list = field(default_factory=list)


def joint_state(pair: PairedModels, pairs, source_extra=None, lr=1e-3, n_max=DEFAULT_N_MAX) -> JointState:
    """Set up joint training.

    ``source_extra`` adds trajectories only the source sees (its own
    demonstrations of the test task); they enter the source likelihood but
    not the alignment term.
    """
    pairs = list(pairs)
    if not pairs:
        raise RejectedInput("joint training needs at least one paired demonstration")
    src = [p.source_traj for p in pairs] + list(source_extra or [])
    tgt = [p.target_traj for p in pairs]
    return JointState(
        AdamState.zeros(pair.source.n_params, learning_rate=lr),
        AdamState.zeros(pair.target.n_params, learning_rate=lr),
        CaseSampler(pair.source, DemonstrationSet(src), n_max),
        CaseSampler(pair.target, DemonstrationSet(tgt), n_max),
        pairs,
    )


def _with_alignment_cases(model: CNMPModel, batch: CaseBatch, obs_sets) -> CaseBatch:
    # alignment cases only carry observations; no queries refer to them
    rows = [batch.obs_x] + [np.stack([model.obs_row(o) for o in obs]) for obs in obs_sets]
    cases = [batch.obs_case] + [np.full(len(obs), batch.n_cases + k) for k, obs in enumerate(obs_sets)]
    return CaseBatch(np.vstack(rows), np.concatenate(cases).astype(int), batch.query_x, batch.query_case,
                     batch.targets, batch.n_cases + len(obs_sets))


def joint_train_step(pair: PairedModels, state: JointState, rng: np.random.Generator, batch_size=1,
                     align_weight=1.0, n_max=DEFAULT_N_MAX):
    """One joint step; returns ``(loss_source, loss_target, loss_align)``.

    Each model draws its own likelihood cases. The alignment term compares
    representations of ``batch_size`` randomly chosen pairs, each observed at
    one shared set of time fractions.
    """
    b1 = state.source_sampler.sample(rng, batch_size)
    b2 = state.target_sampler.sample(rng, batch_size)
    n_align = batch_size if align_weight != 0.0 else 0
    src_sets, tgt_sets = [], []
    for k in rng.integers(len(state.pairs), size=n_align):
        fractions = rng.random(int(rng.integers(1, n_max + 1)))
        s, t = matched_observations(state.pairs[k], fractions)
        src_sets.append(s)
        tgt_sets.append(t)
    l1, l2, la, grad1, grad2 = joint_loss_and_grad(pair, b1, b2, src_sets, tgt_sets, align_weight)
    # fixed update order: source, then target
    adam_step(pair.source.params, grad1, state.source_adam)
    adam_step(pair.target.params, grad2, state.target_adam)
    pair.aligned_steps += int(n_align > 0)
    return l1, l2, la


def joint_loss_and_grad(pair: PairedModels, b1: CaseBatch, b2: CaseBatch, src_sets, tgt_sets, align_weight=1.0):
    """Joint objective ``l1 + l2 + w * l_align`` split into its terms, plus gradients.

    ``src_sets[k]`` and ``tgt_sets[k]`` are matched observation sets whose
    representations are pulled together. Returns
    ``(l1, l2, l_align, grad_source, grad_target)``.
    """
    n1, n2 = b1.n_cases, b2.n_cases
    if src_sets:
        b1 = _with_alignment_cases(pair.source, b1, src_sets)
        b2 = _with_alignment_cases(pair.target, b2, tgt_sets)
    c1 = pair.source.forward_batch(b1)
    c2 = pair.target.forward_batch(b2)
    la, g1_rep, g2_rep = 0.0, None, None
    if src_sets:
        r1, r2 = c1.rep[n1:], c2.rep[n2:]
        diff = r1 - r2
        la = float(np.mean(diff * diff))
        g = align_weight * 2.0 * diff / diff.size
        g1_rep = np.vstack([np.zeros((n1, pair.latent_width)), g])
        g2_rep = np.vstack([np.zeros((n2, pair.latent_width)), -g])
    l1, grad1 = _nll_from_cache(pair.source, c1, b1, g1_rep)
    l2, grad2 = _nll_from_cache(pair.target, c2, b2, g2_rep)
    return l1, l2, la, grad1, grad2


def _nll_from_cache(model, cache, batch, g_rep):
    nll, d_mu, d_raw = gaussian_nll_grad(cache.mu, cache.sigma_raw, batch.targets)
    n = len(batch.targets)
    return float(nll.sum()) / n, model.backward_batch(cache, d_mu / n, d_raw / n, g_rep)


def joint_train(pair: PairedModels, state: JointState, steps: int, rng, batch_size=16, align_weight=1.0,
                log_every=0) -> list:
    """Run ``steps`` joint steps; returns ``[(step, l1, l2, l_align)]`` running means."""
    run = None
    out = []
    for step in range(1, steps + 1):
        losses = np.array(joint_train_step(pair, state, rng, batch_size, align_weight))
        run = losses if run is None else 0.99 * run + 0.01 * losses
        if log_every and step % log_every == 0:
            out.append((step, *map(float, run)))
    state.history.extend(out)
    return out


def pair_latents(pair: PairedModels, pairs, fractions) -> tuple[np.ndarray, np.ndarray]:
    """Representations of every pair from both models at shared fractions."""
    r1, r2 = [], []
    for p in pairs:
        s, t = matched_observations(p, fractions)
        r1.append(represent(pair.source, s))
        r2.append(represent(pair.target, t))
    return np.array(r1), np.array(r2)


def conditioning_times(n_obs=DEFAULT_N_MAX, rng=None) -> np.ndarray:
    if rng is None:
        return np.linspace(0.0, 1.0, n_obs)
    return np.sort(rng.random(n_obs))


def cross_generate(pair: PairedModels, source_solution: Trajectory, query_times=None, obs_times=None,
                   tid="transferred") -> Trajectory:
    """Encode a source trajectory with the source model, decode it with the target's.

    The output always has the target's sensorimotor width.
    """
    if pair.aligned_steps == 0:
        warnings.warn("cross_generate on a pair that was never aligned; the output is not meaningful")
    if source_solution.sm_width != pair.source.D:
        raise RejectedInput(f"source solution width {source_solution.sm_width} != {pair.source.D}")
    obs_times = conditioning_times() if obs_times is None else np.asarray(obs_times, dtype=float)
    query_times = default_grid() if query_times is None else np.asarray(query_times, dtype=float)
    rep = represent(pair.source, [source_solution.observation_at(t) for t in obs_times])
    gamma = source_solution.task_params
    mu, _ = predict_from_rep(pair.target, rep, gamma, query_times)
    return Trajectory(tid, gamma, query_times, mu)


@dataclass
class TransferResult:
    provisional: Trajectory
    adapt: AdaptResult
    conditioning: list

    @property
    def success_curve(self) -> list:
        """``(iteration, success_rate, best_so_far)`` rows."""
        rows, best = [], 0.0
        for it in self.adapt.iterations[1:]:
            best = max(best, it["success_rate"])
            rows.append((it["iteration"], it["success_rate"], best))
        return rows

    @property
    def iterations_to_full_success(self):
        for it, rate, _ in self.success_curve:
            if rate == 1.0:
                return it
        return None


def transfer_adapt(pair: PairedModels, source_solution: Trajectory, env, config: AdaptConfig,
                   target_demos: DemonstrationSet, target_adam: AdamState | None = None, provisional_steps=500,
                   obs_times=None, rng=None) -> TransferResult:
    """Start the target's RL from the decoded source solution.

    The decoded trajectory is added to the target's demonstrations as a
    provisional entry and learned for ``provisional_steps`` SL steps; the
    target is then conditioned on it and refined by interleaved adaptation.
    The pair itself is not modified.
    """
    obs_times = conditioning_times() if obs_times is None else np.asarray(obs_times, dtype=float)
    grid = default_grid(config.solution_points or config.query_points)
    provisional = cross_generate(pair, source_solution, grid, obs_times, tid="provisional")
    return adapt_from(pair.target, provisional, env, config, target_demos, target_adam, provisional_steps,
                      obs_times, rng)


def adapt_from(target: CNMPModel, provisional: Trajectory, env, config: AdaptConfig, target_demos,
               target_adam=None, provisional_steps=500, obs_times=None, rng=None) -> TransferResult:
    """Learn ``provisional`` as an extra demonstration, then adapt conditioned on it."""
    obs_times = conditioning_times() if obs_times is None else np.asarray(obs_times, dtype=float)
    rng = np.random.default_rng([int(config.seed), 7]) if rng is None else rng
    model = target.copy()
    adam = target_adam.copy() if target_adam is not None else model.new_adam(config.sl_learning_rate)
    demos = DemonstrationSet(list(target_demos) + [provisional])
    if provisional_steps:
        train(model, demos, provisional_steps, rng, adam=adam, batch_size=config.sl_batch_size)
    conditioning = [provisional.observation_at(t) for t in obs_times]
    result = interleaved_adapt(model, demos, env, conditioning, config, sl_adam=adam)
    return TransferResult(provisional, result, conditioning)


def write_success_curve(path, result: TransferResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "success_rate", "best_success_rate"])
        for row in result.success_curve:
            w.writerow(row)


def save_pairs(directory, source_set: DemonstrationSet, target_set: DemonstrationSet) -> None:
    """Two JSONL files plus a manifest linking ids and task parameters."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    source_set.save(d / "source.jsonl")
    target_set.save(d / "target.jsonl")
    with open(d / "pairs.jsonl", "w") as fh:
        for p in pair_demos(source_set, target_set):
            fh.write(json.dumps({"source_id": p.source_traj.id, "target_id": p.target_traj.id,
                                 "gamma": [float(g) for g in p.gamma]}) + "\n")


def load_pairs(directory) -> list:
    d = Path(directory)
    manifest = d / "pairs.jsonl"
    if not manifest.exists():
        raise FileNotFoundError(f"missing pairing manifest {manifest}")
    src = DemonstrationSet.load(d / "source.jsonl")
    tgt = DemonstrationSet.load(d / "target.jsonl")
    out = []
    with open(manifest) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            p = PairedDemo(src.by_id(row["source_id"]), tgt.by_id(row["target_id"]))
            if not np.allclose(p.gamma, row["gamma"]):
                raise RejectedInput(f"manifest gamma disagrees for {row['source_id']}")
            out.append(p)
    return out
