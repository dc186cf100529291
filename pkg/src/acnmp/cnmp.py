"""Conditional neural movement primitives.

A model encodes ``(t, gamma, sm)`` observation points, averages the
encodings into one representation and decodes ``(rep, t_q, gamma)`` into a
Gaussian over the sensorimotor value at ``t_q``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .autodiff import (
    MLP,
    SIGMA_FLOOR,
    AdamState,
    LayerSpec,
    RejectedInput,
    adam_step,
    chain,
    dump_params,
    effective_sigma,
    gaussian_nll_grad,
    load_params,
)

DEFAULT_QUERY_POINTS = 200
DEFAULT_N_MAX = 5


@dataclass
class Trajectory:
    id: str
    task_params: np.ndarray
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.task_params = np.atleast_1d(np.asarray(self.task_params, dtype=float)).reshape(-1)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        self.values = values
        if len(self.times) < 2:
            raise RejectedInput(f"trajectory {self.id!r} needs at least 2 points")
        if len(self.times) != len(self.values):
            raise RejectedInput(f"trajectory {self.id!r}: {len(self.times)} times vs {len(self.values)} values")
        if np.any(self.times < 0) or np.any(self.times > 1):
            raise RejectedInput(f"trajectory {self.id!r}: times must lie in [0, 1]")
        if np.any(np.diff(self.times) <= 0):
            raise RejectedInput(f"trajectory {self.id!r}: times must be strictly increasing")

    @property
    def sm_width(self) -> int:
        return self.values.shape[1]

    @property
    def gamma_width(self) -> int:
        return len(self.task_params)

    def __len__(self):
        return len(self.times)

    def value_at(self, t):
        """Piecewise-linear value(s) at time(s) ``t`` (clamped to the ends)."""
        t = np.asarray(t, dtype=float)
        cols = [np.interp(t, self.times, self.values[:, d]) for d in range(self.sm_width)]
        return np.stack(cols, axis=-1)

    def resample(self, times) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        return Trajectory(self.id, self.task_params.copy(), times, self.value_at(times))

    def observation(self, index: int) -> "ObservationPoint":
        return ObservationPoint(self.times[index], self.task_params, self.values[index])

    def observation_at(self, t: float) -> "ObservationPoint":
        return ObservationPoint(float(t), self.task_params, self.value_at(t))

    def to_json(self) -> dict:
        points = [[float(t), *map(float, v)] for t, v in zip(self.times, self.values)]
        return {"id": self.id, "task_params": [float(g) for g in self.task_params], "points": points}

    @classmethod
    def from_json(cls, obj: dict) -> "Trajectory":
        pts = np.asarray(obj["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 2:
            raise RejectedInput(f"trajectory {obj.get('id')!r}: points must be [t, v1..vD] rows")
        return cls(str(obj["id"]), np.asarray(obj.get("task_params", []), dtype=float), pts[:, 0], pts[:, 1:])


@dataclass
class DemonstrationSet:
    trajectories: list

    def __post_init__(self):
        self.trajectories = list(self.trajectories)
        if not self.trajectories:
            raise RejectedInput("demonstration set is empty")
        d = {tr.sm_width for tr in self.trajectories}
        g = {tr.gamma_width for tr in self.trajectories}
        if len(d) != 1 or len(g) != 1:
            raise RejectedInput(f"inhomogeneous widths: sm {sorted(d)}, gamma {sorted(g)}")

    @property
    def sm_width(self) -> int:
        return self.trajectories[0].sm_width

    @property
    def gamma_width(self) -> int:
        return self.trajectories[0].gamma_width

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    def by_id(self, tid: str) -> Trajectory:
        for tr in self.trajectories:
            if tr.id == tid:
                return tr
        raise KeyError(tid)

    def without_task_params(self) -> "DemonstrationSet":
        return DemonstrationSet(
            [Trajectory(tr.id, np.zeros(0), tr.times, tr.values) for tr in self.trajectories]
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for tr in self.trajectories:
                fh.write(json.dumps(tr.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "DemonstrationSet":
        with open(path) as fh:
            trajs = [Trajectory.from_json(json.loads(line)) for line in fh if line.strip()]
        return cls(trajs)


@dataclass
class ObservationPoint:
    t: float
    gamma: np.ndarray
    sm: np.ndarray

    def __post_init__(self):
        self.t = float(self.t)
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float)).reshape(-1)
        self.sm = np.atleast_1d(np.asarray(self.sm, dtype=float)).reshape(-1)


@dataclass
class GaussianPrediction:
    mu: np.ndarray
    sigma_raw: np.ndarray

    @property
    def sigma(self):
        return effective_sigma(self.sigma_raw)


@dataclass
class CaseBatch:
    """Flattened training cases.

    ``obs_x`` rows are encoder inputs; ``obs_case`` maps each row to a case.
    ``query_x`` rows are the decoder inputs without the representation;
    ``query_case`` maps each query to its case.
    """

    obs_x: np.ndarray
    obs_case: np.ndarray
    query_x: np.ndarray
    query_case: np.ndarray
    targets: np.ndarray | None = None
    n_cases: int = 0

    def mean_matrix(self) -> np.ndarray:
        counts = np.bincount(self.obs_case, minlength=self.n_cases).astype(float)
        if np.any(counts == 0):
            raise RejectedInput("every case needs at least one observation")
        A = np.zeros((self.n_cases, len(self.obs_case)))
        A[self.obs_case, np.arange(len(self.obs_case))] = 1.0 / counts[self.obs_case]
        return A


@dataclass
class BatchCache:
    A: np.ndarray
    rep: np.ndarray
    enc_rec: object
    dec_rec: object
    mu: np.ndarray
    sigma_raw: np.ndarray
    query_case: np.ndarray


class CNMPModel:
    """Encoder/decoder pair over one flat parameter vector (encoder first)."""

    def __init__(self, sm_width, gamma_width, encoder_widths, decoder_hidden,
                 gamma_in_encoder=True, gamma_in_decoder=True, params=None, seed=0, hidden="relu"):
        self.D = int(sm_width)
        self.G = int(gamma_width)
        self.gamma_in_encoder = bool(gamma_in_encoder)
        self.gamma_in_decoder = bool(gamma_in_decoder)
        enc_in = 1 + (self.G if self.gamma_in_encoder else 0) + self.D
        self.encoder = MLP(chain(enc_in, encoder_widths, hidden=hidden, last="identity"))
        self.L = self.encoder.output_width
        dec_in = self.L + 1 + (self.G if self.gamma_in_decoder else 0)
        self.decoder = MLP(chain(dec_in, list(decoder_hidden) + [2 * self.D], hidden=hidden, last="identity"))
        self.n_encoder = self.encoder.n_params
        if params is None:
            rng = np.random.default_rng(seed)
            params = np.concatenate([self.encoder.init_params(rng), self.decoder.init_params(rng)])
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise RejectedInput(f"expected {self.n_params} parameters, got {params.shape}")
        self.params = params

    @classmethod
    def from_specs(cls, sm_width, gamma_width, encoder_specs, decoder_specs, params,
                   gamma_in_encoder=True, gamma_in_decoder=True):
        model = cls.__new__(cls)
        model.D, model.G = int(sm_width), int(gamma_width)
        model.gamma_in_encoder, model.gamma_in_decoder = gamma_in_encoder, gamma_in_decoder
        model.encoder, model.decoder = MLP(encoder_specs), MLP(decoder_specs)
        model.L = model.encoder.output_width
        model.n_encoder = model.encoder.n_params
        enc_in = 1 + (model.G if gamma_in_encoder else 0) + model.D
        dec_in = model.L + 1 + (model.G if gamma_in_decoder else 0)
        if model.encoder.input_width != enc_in or model.decoder.input_width != dec_in:
            raise RejectedInput("layer specs do not match model dimensions")
        if model.decoder.output_width != 2 * model.D:
            raise RejectedInput("decoder must output 2*D values")
        model.params = np.asarray(params, dtype=float).copy()
        if model.params.shape != (model.n_params,):
            raise RejectedInput("parameter count mismatch")
        return model

    @property
    def n_params(self) -> int:
        return self.encoder.n_params + self.decoder.n_params

    @property
    def theta(self) -> np.ndarray:
        return self.params[: self.n_encoder]

    @property
    def phi(self) -> np.ndarray:
        return self.params[self.n_encoder:]

    def copy(self) -> "CNMPModel":
        return CNMPModel.from_specs(self.D, self.G, self.encoder.specs, self.decoder.specs,
                                    self.params.copy(), self.gamma_in_encoder, self.gamma_in_decoder)

    def new_adam(self, lr=1e-4) -> AdamState:
        return AdamState.zeros(self.n_params, learning_rate=lr)

    # -- row builders --------------------------------------------------------

    def obs_row(self, obs: ObservationPoint) -> np.ndarray:
        if len(obs.sm) != self.D or len(obs.gamma) != self.G:
            raise RejectedInput(
                f"observation widths (G={len(obs.gamma)}, D={len(obs.sm)}) do not match model (G={self.G}, D={self.D})"
            )
        parts = [[obs.t]]
        if self.gamma_in_encoder:
            parts.append(obs.gamma)
        parts.append(obs.sm)
        return np.concatenate(parts)

    def query_row(self, t_q: float, gamma) -> np.ndarray:
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float)).reshape(-1)
        if len(gamma) != self.G:
            raise RejectedInput(f"gamma width {len(gamma)} != {self.G}")
        return np.concatenate([[t_q], gamma]) if self.gamma_in_decoder else np.array([t_q], dtype=float)

    def query_rows(self, times, gamma) -> np.ndarray:
        times = np.asarray(times, dtype=float).reshape(-1, 1)
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float)).reshape(-1)
        if len(gamma) != self.G:
            raise RejectedInput(f"gamma width {len(gamma)} != {self.G}")
        if not self.gamma_in_decoder or self.G == 0:
            return times
        return np.hstack([times, np.broadcast_to(gamma, (len(times), self.G))])

    # -- batched path used by every loss --------------------------------------

    def forward_batch(self, batch: CaseBatch, params=None):
        params = self.params if params is None else params
        A = batch.mean_matrix()
        H, enc_rec = self.encoder.forward(params[: self.n_encoder], batch.obs_x, record=True)
        rep = A @ H
        dec_in = np.hstack([rep[batch.query_case], batch.query_x])
        out, dec_rec = self.decoder.forward(params[self.n_encoder:], dec_in, record=True)
        mu, raw = out[:, : self.D], out[:, self.D:]
        return BatchCache(A, rep, enc_rec, dec_rec, mu, raw, batch.query_case)

    def backward_batch(self, cache: BatchCache, g_mu, g_raw, g_rep=None, params=None):
        params = self.params if params is None else params
        grad = np.zeros(self.n_params)
        g_out = np.hstack([g_mu, g_raw])
        _, g_in = self.decoder.backward(params[self.n_encoder:], cache.dec_rec, g_out, grad[self.n_encoder:])
        g_rep_total = np.zeros_like(cache.rep)
        np.add.at(g_rep_total, cache.query_case, g_in[:, : self.L])
        if g_rep is not None:
            g_rep_total += g_rep
        g_H = cache.A.T @ g_rep_total
        self.encoder.backward(params[: self.n_encoder], cache.enc_rec, g_H, grad[: self.n_encoder])
        return grad

    # -- snapshots -----------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("cnmp-version 1\n")
            fh.write(f"dims {self.D} {self.G} {self.L}\n")
            fh.write(f"gamma {int(self.gamma_in_encoder)} {int(self.gamma_in_decoder)}\n")
            dump_params(fh, self.encoder.specs, self.theta)
            dump_params(fh, self.decoder.specs, self.phi)

    @classmethod
    def load(cls, path) -> "CNMPModel":
        with open(path) as fh:
            head = fh.readline().split()
            if head != ["cnmp-version", "1"]:
                raise RejectedInput(f"not a CNMP snapshot: {head}")
            _, D, G, L = fh.readline().split()
            _, ge, gd = fh.readline().split()
            enc, theta = load_params(fh)
            dec, phi = load_params(fh)
        model = cls.from_specs(int(D), int(G), enc, dec, np.concatenate([theta, phi]), bool(int(ge)), bool(int(gd)))
        if model.L != int(L):
            raise RejectedInput("latent width in header does not match encoder")
        return model


def build_model(demos_or_dims, encoder_widths=(128, 64, 32, 16, 8), decoder_hidden=(124, 124),
                seed=0, **kw) -> CNMPModel:
    if isinstance(demos_or_dims, DemonstrationSet):
        D, G = demos_or_dims.sm_width, demos_or_dims.gamma_width
    else:
        D, G = demos_or_dims
    return CNMPModel(D, G, encoder_widths, decoder_hidden, seed=seed, **kw)


# -- single-point operations -------------------------------------------------


def encode(model: CNMPModel, obs: ObservationPoint) -> np.ndarray:
    return model.encoder.forward(model.theta, model.obs_row(obs))


def aggregate(latents) -> np.ndarray:
    """Elementwise mean, exactly rounded so the result ignores input order."""
    latents = [np.asarray(v, dtype=float) for v in latents]
    if not latents:
        raise RejectedInput("cannot aggregate an empty list of latents")
    width = {len(v) for v in latents}
    if len(width) != 1:
        raise RejectedInput(f"latent widths differ: {sorted(width)}")
    stack = np.stack(latents)
    n = len(latents)
    return np.array([math.fsum(col) / n for col in stack.T])


def decode(model: CNMPModel, rep, t_q: float, gamma) -> GaussianPrediction:
    rep = np.asarray(rep, dtype=float)
    if rep.shape != (model.L,):
        raise RejectedInput(f"representation width {rep.shape} != ({model.L},)")
    out = model.decoder.forward(model.phi, np.concatenate([rep, model.query_row(t_q, gamma)]))
    return GaussianPrediction(out[: model.D], out[model.D:])


def represent(model: CNMPModel, conditioning: Sequence[ObservationPoint]) -> np.ndarray:
    """Aggregate representation of a conditioning set, independent of its order."""
    if not conditioning:
        raise RejectedInput("at least one conditioning observation is required")
    rows = np.stack([model.obs_row(o) for o in conditioning])
    rows = rows[np.lexsort(rows.T[::-1])]
    H = model.encoder.forward(model.theta, rows)
    return aggregate(list(H))


def predict(model: CNMPModel, conditioning, gamma, query_times):
    """Means and raw spreads over ``query_times`` given one conditioning set."""
    return predict_from_rep(model, represent(model, conditioning), gamma, query_times)


def predict_from_rep(model: CNMPModel, rep, gamma, query_times):
    """Decoder means and raw spreads for a given representation."""
    rep = np.asarray(rep, dtype=float)
    if rep.shape != (model.L,):
        raise RejectedInput(f"representation width {rep.shape} != ({model.L},)")
    q = model.query_rows(query_times, gamma)
    dec_in = np.hstack([np.broadcast_to(rep, (len(q), model.L)), q])
    out = model.decoder.forward(model.phi, dec_in)
    return out[:, : model.D], out[:, model.D:]


def default_grid(n=DEFAULT_QUERY_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def generate(model: CNMPModel, conditioning, gamma, query_times=None, tid="generated") -> Trajectory:
    """Mean trajectory for ``conditioning`` and task parameters ``gamma``."""
    query_times = default_grid() if query_times is None else np.asarray(query_times, dtype=float)
    if len(query_times) == 0:
        raise RejectedInput("empty query list")
    if np.any(query_times < 0) or np.any(query_times > 1):
        raise RejectedInput("query times must lie in [0, 1]")
    mu, _ = predict(model, conditioning, gamma, query_times)
    return Trajectory(tid, np.atleast_1d(np.asarray(gamma, dtype=float)), query_times, mu)


# -- training ----------------------------------------------------------------


def sample_training_case(demos: DemonstrationSet, rng: np.random.Generator, n_max=DEFAULT_N_MAX):
    """One trajectory, ``n ~ U{1..n_max}`` observations from it and one query."""
    tr = demos[int(rng.integers(len(demos)))]
    n = int(rng.integers(1, n_max + 1))
    n = min(n, len(tr))
    idx = rng.choice(len(tr), size=n, replace=False)
    q = int(rng.integers(len(tr)))
    return [tr.observation(int(i)) for i in idx], tr.observation(q)


def cases_to_batch(model: CNMPModel, cases) -> CaseBatch:
    obs_rows, obs_case, q_rows, targets = [], [], [], []
    for k, (observations, query) in enumerate(cases):
        for o in observations:
            obs_rows.append(model.obs_row(o))
            obs_case.append(k)
        q_rows.append(model.query_row(query.t, query.gamma))
        targets.append(query.sm)
    return CaseBatch(np.array(obs_rows), np.array(obs_case, dtype=int), np.array(q_rows),
                     np.arange(len(cases)), np.array(targets), len(cases))


class CaseSampler:
    """Vectorized version of :func:`sample_training_case` for one model/demo pair."""

    def __init__(self, model: CNMPModel, demos: DemonstrationSet, n_max=DEFAULT_N_MAX):
        if demos.sm_width != model.D or demos.gamma_width != model.G:
            raise RejectedInput(
                f"demonstrations (D={demos.sm_width}, G={demos.gamma_width}) do not match model (D={model.D}, G={model.G})"
            )
        self.n_max = n_max
        self.lengths = np.array([len(tr) for tr in demos])
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)[:-1]])
        self.obs_rows = np.vstack([
            np.hstack([tr.times[:, None]]
                      + ([np.broadcast_to(tr.task_params, (len(tr), model.G))] if model.gamma_in_encoder else [])
                      + [tr.values])
            for tr in demos
        ])
        self.query_rows = np.vstack([model.query_rows(tr.times, tr.task_params) for tr in demos])
        self.targets = np.vstack([tr.values for tr in demos])
        self.max_len = int(self.lengths.max())

    def sample(self, rng, batch_size=1) -> CaseBatch:
        k = rng.integers(len(self.lengths), size=batch_size)
        lens = self.lengths[k]
        n = np.minimum(rng.integers(1, self.n_max + 1, size=batch_size), lens)
        keys = rng.random((batch_size, self.max_len))
        keys[np.arange(self.max_len)[None, :] >= lens[:, None]] = 2.0
        width = min(self.n_max, self.max_len)
        picks = np.argsort(keys, axis=1)[:, :width]
        mask = np.arange(width)[None, :] < n[:, None]
        case_of = np.broadcast_to(np.arange(batch_size)[:, None], picks.shape)[mask]
        obs_idx = (self.offsets[k][:, None] + picks)[mask]
        q_idx = self.offsets[k] + (rng.random(batch_size) * lens).astype(int)
        return CaseBatch(self.obs_rows[obs_idx], case_of, self.query_rows[q_idx], np.arange(batch_size),
                         self.targets[q_idx], batch_size)


def sample_batch(model: CNMPModel, demos: DemonstrationSet, rng, batch_size=1, n_max=DEFAULT_N_MAX) -> CaseBatch:
    return CaseSampler(model, demos, n_max).sample(rng, batch_size)


def nll_and_grad(model: CNMPModel, batch: CaseBatch, params=None, g_rep=None):
    """Mean per-case NLL of the batch targets and its parameter gradient."""
    cache = model.forward_batch(batch, params)
    nll, d_mu, d_raw = gaussian_nll_grad(cache.mu, cache.sigma_raw, batch.targets)
    n = len(batch.targets)
    loss = float(nll.sum()) / n
    grad = model.backward_batch(cache, d_mu / n, d_raw / n, g_rep, params)
    return loss, grad, cache


def sl_loss(model: CNMPModel, case) -> tuple[float, np.ndarray]:
    """Loss and gradient for one ``(observations, query)`` case or a CaseBatch."""
    batch = case if isinstance(case, CaseBatch) else cases_to_batch(model, [case])
    loss, grad, _ = nll_and_grad(model, batch)
    return loss, grad


def sl_step(model: CNMPModel, sampler: CaseSampler, adam: AdamState, rng, batch_size=1) -> float:
    batch = sampler.sample(rng, batch_size)
    loss, grad, _ = nll_and_grad(model, batch)
    adam_step(model.params, grad, adam)
    return loss


def train(model: CNMPModel, demos: DemonstrationSet, steps: int, rng, adam: AdamState | None = None,
          batch_size=1, n_max=DEFAULT_N_MAX, log_every=0) -> list:
    """Stochastic SL training; returns ``[(step, loss)]`` every ``log_every`` steps."""
    adam = adam if adam is not None else model.new_adam()
    sampler = CaseSampler(model, demos, n_max)
    history = []
    running = None
    for step in range(1, steps + 1):
        loss = sl_step(model, sampler, adam, rng, batch_size)
        running = loss if running is None else 0.99 * running + 0.01 * loss
        if log_every and step % log_every == 0:
            history.append((step, running))
    return history


# -- evaluation --------------------------------------------------------------


def conditioning_for(tr: Trajectory, policy="first") -> list:
    """Conditioning points drawn from a demonstration.

    ``policy`` is ``"first"``, ``"last"``, ``"time:<t>"`` or ``"times:<t1>,<t2>..."``.
    """
    if policy == "first":
        return [tr.observation(0)]
    if policy == "last":
        return [tr.observation(len(tr) - 1)]
    kind, _, arg = policy.partition(":")
    if kind == "time":
        return [tr.observation_at(float(arg))]
    if kind == "times":
        return [tr.observation_at(float(a)) for a in arg.split(",")]
    raise RejectedInput(f"unknown conditioning policy {policy!r}")


def reconstruction_error(model: CNMPModel, demos: Iterable[Trajectory], policy="first") -> dict:
    """Mean absolute error between each demo and its conditioned reproduction."""
    errors = {}
    for tr in demos:
        gen = generate(model, conditioning_for(tr, policy), tr.task_params, tr.times)
        errors[tr.id] = float(np.mean(np.abs(gen.values - tr.values)))
    return errors
