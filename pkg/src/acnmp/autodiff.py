"""Reverse-mode value-and-gradient engine for plain MLP chains.

Parameters of a network live in one flat float64 vector laid out as
``(W_0, b_0, W_1, b_1, ...)`` where ``W_k`` has shape ``(in, out)`` in
row-major order. Every forward pass returns a :class:`ForwardRecord` holding
the intermediates that :meth:`MLP.backward` needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "softplus", "identity")
SIGMA_FLOOR = 1e-4
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class RejectedInput(ValueError):
    """Shape or width mismatch in a numeric call."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class StateError(RuntimeError):
    """An operation was called out of order."""


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise RejectedInput(f"layer widths must be >= 1, got {self}")
        if self.activation not in ACTIVATIONS:
            raise RejectedInput(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        return self.input_width * self.output_width + self.output_width


def chain(input_width: int, widths: Sequence[int], hidden="relu", last="identity") -> list[LayerSpec]:
    """Build chained layer specs: ``input_width -> widths[0] -> ... -> widths[-1]``."""
    specs = []
    prev = input_width
    for i, w in enumerate(widths):
        act = last if i == len(widths) - 1 else hidden
        specs.append(LayerSpec(prev, int(w), act))
        prev = int(w)
    return specs


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise RejectedInput("empty layer list")
    for a, b in zip(specs[:-1], specs[1:]):
        if a.output_width != b.input_width:
            raise RejectedInput(f"layers do not chain: {a} -> {b}")


def softplus(x):
    """Overflow-safe ``log(1 + exp(x))``; works on scalars and arrays."""
    if np.isscalar(x):
        x = float(x)
        return max(x, 0.0) + math.log1p(math.exp(-abs(x)))
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def effective_sigma(sigma_raw, floor=SIGMA_FLOOR):
    return softplus(sigma_raw) + floor


def gaussian_nll_sigma(mu, sigma, target):
    """Summed negative log density of ``target`` under N(mu, sigma^2)."""
    mu, sigma, target = (np.asarray(a, dtype=float) for a in (mu, sigma, target))
    if not (mu.shape == sigma.shape == target.shape):
        raise RejectedInput(f"shape mismatch {mu.shape}, {sigma.shape}, {target.shape}")
    z = (target - mu) / sigma
    return float(np.sum(np.log(sigma) + HALF_LOG_2PI + 0.5 * z * z))


def gaussian_nll(mu, sigma_raw, target, floor=SIGMA_FLOOR):
    """NLL with the spread given as a pre-softplus value."""
    mu, sigma_raw, target = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (mu, sigma_raw, target))
    if not (mu.shape == sigma_raw.shape == target.shape):
        raise RejectedInput(f"shape mismatch {mu.shape}, {sigma_raw.shape}, {target.shape}")
    return gaussian_nll_sigma(mu, effective_sigma(sigma_raw, floor), target)


def gaussian_nll_grad(mu, sigma_raw, target, floor=SIGMA_FLOOR, scale=1.0):
    """Elementwise NLL terms and their derivatives w.r.t. ``mu`` and ``sigma_raw``.

    ``scale`` multiplies the effective spread (exploration scaling). Returns
    ``(nll, d_mu, d_sigma_raw)`` with ``nll`` of the same shape as the inputs.
    """
    sig = scale * effective_sigma(sigma_raw, floor)
    diff = target - mu
    inv = 1.0 / sig
    z = diff * inv
    nll = np.log(sig) + HALF_LOG_2PI + 0.5 * z * z
    d_mu = -z * inv
    d_sig = inv - z * z * inv
    d_raw = d_sig * scale * sigmoid(sigma_raw)
    return nll, d_mu, d_raw


@dataclass
class ForwardRecord:
    inputs: list = field(default_factory=list)
    preacts: list = field(default_factory=list)
    output: np.ndarray | None = None
    complete: bool = False


class MLP:
    """A fixed chain of dense layers over a flat parameter vector."""

    def __init__(self, specs: Sequence[LayerSpec]):
        specs = list(specs)
        check_chain(specs)
        self.specs = specs
        self.slices = []
        offset = 0
        for s in specs:
            w = slice(offset, offset + s.input_width * s.output_width)
            offset = w.stop
            b = slice(offset, offset + s.output_width)
            offset = b.stop
            self.slices.append((w, b))
        self.n_params = offset

    @property
    def input_width(self) -> int:
        return self.specs[0].input_width

    @property
    def output_width(self) -> int:
        return self.specs[-1].output_width

    def __eq__(self, other):
        return isinstance(other, MLP) and self.specs == other.specs

    def layers(self, params):
        """Yield ``(W, b)`` views into ``params``."""
        for s, (w, b) in zip(self.specs, self.slices):
            yield params[w].reshape(s.input_width, s.output_width), params[b]

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        params = np.empty(self.n_params)
        for s, (w, b) in zip(self.specs, self.slices):
            bound = math.sqrt(1.0 / s.input_width)
            params[w] = rng.uniform(-bound, bound, size=w.stop - w.start)
            params[b] = rng.uniform(-bound, bound, size=b.stop - b.start)
        return params

    def _check(self, params, x):
        if params.shape != (self.n_params,):
            raise RejectedInput(f"expected {self.n_params} parameters, got {params.shape}")
        if x.shape[-1] != self.input_width:
            raise RejectedInput(f"expected input width {self.input_width}, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite network input")

    def forward(self, params, x, record=False):
        """Apply the network to ``x`` of shape ``(..., input_width)``.

        Returns the output, or ``(output, ForwardRecord)`` when ``record``.
        """
        params = np.asarray(params, dtype=float)
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        self._check(params, h)
        rec = ForwardRecord() if record else None
        for s, (W, b) in zip(self.specs, self.layers(params)):
            z = h @ W + b
            if rec is not None:
                rec.inputs.append(h)
                rec.preacts.append(z)
            if s.activation == "relu":
                h = np.maximum(z, 0.0)
            elif s.activation == "softplus":
                h = softplus(z)
            else:
                h = z
        out = h[0] if squeeze else h
        if rec is None:
            return out
        rec.output = h
        rec.complete = True
        return out, rec

    def backward(self, params, rec: ForwardRecord | None, grad_out, grad_params=None):
        """Reverse pass from ``d loss / d output``.

        Accumulates into ``grad_params`` when given (same layout as ``params``)
        and returns ``(grad_params, grad_input)``.
        """
        if rec is None or not rec.complete:
            raise StateError("backward called without a completed forward record")
        params = np.asarray(params, dtype=float)
        if grad_params is None:
            grad_params = np.zeros(self.n_params)
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        if g.shape != rec.output.shape:
            raise RejectedInput(f"grad shape {g.shape} != output shape {rec.output.shape}")
        layers = list(self.layers(params))
        for k in range(len(self.specs) - 1, -1, -1):
            s = self.specs[k]
            z = rec.preacts[k]
            if s.activation == "relu":
                g = g * (z > 0)
            elif s.activation == "softplus":
                g = g * sigmoid(z)
            w_sl, b_sl = self.slices[k]
            W, _ = layers[k]
            grad_params[w_sl] += (rec.inputs[k].T @ g).ravel()
            grad_params[b_sl] += g.sum(axis=0)
            g = g @ W.T
        return grad_params, g


def mlp_forward(specs: Sequence[LayerSpec], params, x):
    return MLP(specs).forward(params, x)


def backward(specs: Sequence[LayerSpec], params, record, grad_out):
    """Functional wrapper: gradient w.r.t. the flat parameter vector."""
    return MLP(specs).backward(params, record, grad_out)[0]


def clip_global_norm(grads, max_norm=10.0):
    norm = float(np.linalg.norm(grads))
    if norm > max_norm:
        grads = grads * (max_norm / norm)
    return grads, norm


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n, **hyper):
        return cls(np.zeros(n), np.zeros(n), **hyper)

    def copy(self):
        return AdamState(self.first_moment.copy(), self.second_moment.copy(), self.step_count,
                         self.learning_rate, self.beta1, self.beta2, self.epsilon)


def adam_step(params, grads, state: AdamState, clip=10.0):
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    Returns ``True`` if the update was applied. A non-finite gradient skips
    the update and returns ``False``; the state is left untouched.
    """
    if params.shape != grads.shape or state.first_moment.shape != params.shape:
        raise RejectedInput("parameter, gradient and moment lengths differ")
    if not np.all(np.isfinite(grads)):
        return False
    if clip is not None:
        grads, _ = clip_global_norm(grads, clip)
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    m, v = state.first_moment, state.second_moment
    m *= b1
    m += (1.0 - b1) * grads
    v *= b2
    v += (1.0 - b2) * (grads * grads)
    denom = np.sqrt(v * (1.0 / (1.0 - b2 ** state.step_count)))
    denom += state.epsilon
    params -= (state.learning_rate / (1.0 - b1 ** state.step_count)) * m / denom
    return True


# -- parameter snapshots ----------------------------------------------------

SNAPSHOT_VERSION = 1


def format_specs(specs: Sequence[LayerSpec]) -> str:
    return ",".join(f"{s.input_width}x{s.output_width}:{s.activation}" for s in specs)


def parse_specs(text: str) -> list[LayerSpec]:
    specs = []
    for item in text.strip().split(","):
        shape, act = item.split(":")
        i, o = shape.split("x")
        specs.append(LayerSpec(int(i), int(o), act))
    check_chain(specs)
    return specs


def dump_params(fh, specs: Sequence[LayerSpec], params) -> None:
    fh.write(f"params-version {SNAPSHOT_VERSION}\n")
    fh.write(f"layers {format_specs(specs)}\n")
    fh.write(f"count {len(params)}\n")
    for v in params:
        fh.write(repr(float(v)) + "\n")


def load_params(fh) -> tuple[list[LayerSpec], np.ndarray]:
    version = fh.readline().split()
    if version[:1] != ["params-version"] or int(version[1]) != SNAPSHOT_VERSION:
        raise RejectedInput(f"unsupported snapshot header {version}")
    specs = parse_specs(fh.readline().split(maxsplit=1)[1])
    count = int(fh.readline().split()[1])
    values = np.array([float(fh.readline()) for _ in range(count)])
    if count != MLP(specs).n_params:
        raise RejectedInput("parameter count does not match layer list")
    return specs, values
