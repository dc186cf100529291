"""Experiment configuration: INI files and named presets.

A config has the sections ``experiment``, ``env``, ``model``, ``train``,
``adapt`` and ``seeds``. Layer lists are comma separated; the decoder list
includes its output layer (``2 * sm_width`` units).
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field

from .autodiff import RejectedInput
from .rl import AdaptConfig


class ConfigError(ValueError):
    """A configuration file or preset is malformed or inconsistent."""


@dataclass
class TrainConfig:
    steps: int = 10000
    learning_rate: float = 1e-3
    batch_size: int = 16
    finetune_steps: int = 0
    finetune_learning_rate: float = 1e-4
    n_demos: int = 6
    log_every: int = 100
    align_weight: float = 64.0


@dataclass
class ExperimentConfig:
    name: str
    env: str
    env_params: tuple = ()
    sm_width: int = 1
    gamma_width: int = 1
    encoder: tuple = (128, 64, 32, 16, 8)
    decoder: tuple = (124, 124, 2)
    train: TrainConfig = field(default_factory=TrainConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    seed: int = 0
    out: str = "runs"

    def __post_init__(self):
        self.env_params = tuple(float(v) for v in self.env_params)
        self.encoder = tuple(int(v) for v in self.encoder)
        self.decoder = tuple(int(v) for v in self.decoder)
        if not self.encoder or not self.decoder:
            raise ConfigError("encoder and decoder need at least one layer")
        if self.decoder[-1] != 2 * self.sm_width:
            raise ConfigError(f"decoder output {self.decoder[-1]} must be 2 * sm_width = {2 * self.sm_width}")

    @property
    def decoder_hidden(self) -> tuple:
        return self.decoder[:-1]

    @property
    def latent_width(self) -> int:
        return self.encoder[-1]

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


def _ints(text: str) -> tuple:
    text = text.strip()
    return tuple(int(v) for v in text.split(",")) if text else ()


def _floats(text: str) -> tuple:
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _join(values) -> str:
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def _section_from(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            out[f.name] = _join(v)
        elif v is None:
            out[f.name] = "none"
        elif isinstance(v, float):
            out[f.name] = repr(v)
        else:
            out[f.name] = str(v)
    return out


def _coerce(cls, section) -> object:
    kw = {}
    types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    for key, raw in section.items():
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        kind = types[key].split("|")[0].strip()
        if raw == "none":
            kw[key] = None
        elif kind == "bool":
            if raw not in ("True", "False"):
                raise ConfigError(f"{key} must be True or False")
            kw[key] = raw == "True"
        elif kind == "int":
            kw[key] = int(raw)
        elif kind == "float":
            kw[key] = float(raw)
        elif kind == "tuple":
            kw[key] = _ints(raw)
        else:
            kw[key] = raw
    try:
        return cls(**kw)
    except RejectedInput as exc:
        raise ConfigError(str(exc)) from exc


def dumps(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {"name": cfg.name, "out": cfg.out}
    cp["env"] = {"name": cfg.env, "params": _join(cfg.env_params)}
    cp["model"] = {"sm_width": str(cfg.sm_width), "gamma_width": str(cfg.gamma_width),
                   "encoder": _join(cfg.encoder), "decoder": _join(cfg.decoder)}
    cp["train"] = _section_from(cfg.train)
    cp["adapt"] = _section_from(cfg.adapt)
    cp["seeds"] = {"seed": str(cfg.seed)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def loads(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    for name in ("experiment", "env", "model"):
        if name not in cp:
            raise ConfigError(f"missing [{name}] section")
    try:
        return ExperimentConfig(
            name=cp["experiment"]["name"],
            out=cp["experiment"].get("out", "runs"),
            env=cp["env"]["name"],
            env_params=_floats(cp["env"].get("params", "")),
            sm_width=int(cp["model"]["sm_width"]),
            gamma_width=int(cp["model"]["gamma_width"]),
            encoder=_ints(cp["model"]["encoder"]),
            decoder=_ints(cp["model"]["decoder"]),
            train=_coerce(TrainConfig, cp["train"]) if "train" in cp else TrainConfig(),
            adapt=_coerce(AdaptConfig, cp["adapt"]) if "adapt" in cp else AdaptConfig(),
            seed=int(cp["seeds"]["seed"]) if "seeds" in cp else 0,
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return loads(fh.read())


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cfg))


def _adapt(**kw) -> AdaptConfig:
    return AdaptConfig(**kw)


PRESETS = {
    "viapoint": ExperimentConfig(
        "viapoint", "viapoint2d", env_params=(0.5, 1.0), sm_width=1, gamma_width=1,
        encoder=(128, 64, 32, 16, 8), decoder=(124, 124, 2),
        train=TrainConfig(steps=10000, learning_rate=1e-3, n_demos=6),
        adapt=_adapt(max_rollouts=200, interleave_ratio=(1, 2), learning_rate=2e-3, sl_learning_rate=1e-3,
                     query_points=11, solution_points=100),
    ),
    "push": ExperimentConfig(
        "push", "push", env_params=(), sm_width=3, gamma_width=2,
        encoder=(128, 128, 64, 32), decoder=(128, 128, 128, 6),
        train=TrainConfig(steps=20000, learning_rate=1e-3, finetune_steps=10000, finetune_learning_rate=1e-4,
                          n_demos=9),
        adapt=_adapt(max_rollouts=500, interleave_ratio=(1, 1), learning_rate=2e-4, sl_learning_rate=1e-4,
                     query_points=51, solution_points=200, track_retention=False),
    ),
    "wall": ExperimentConfig(
        "wall", "wall", env_params=(), sm_width=2, gamma_width=4,
        encoder=(128, 128, 128, 64), decoder=(128, 128, 64, 32, 4),
        train=TrainConfig(steps=20000, learning_rate=1e-3, n_demos=30),
        adapt=_adapt(max_rollouts=600, interleave_ratio=(1, 1), learning_rate=3e-4, sl_learning_rate=1e-4,
                     query_points=21, solution_points=100, track_retention=False),
    ),
    "transfer3": ExperimentConfig(
        "transfer3", "button3", sm_width=3, gamma_width=0,
        encoder=(128, 128, 128, 64), decoder=(128, 128, 128, 128, 6),
        train=TrainConfig(steps=16000, learning_rate=1e-3, n_demos=40),
    ),
    "transfer4": ExperimentConfig(
        "transfer4", "button", sm_width=4, gamma_width=0,
        encoder=(128, 128, 128, 64), decoder=(128, 128, 128, 128, 8),
        train=TrainConfig(steps=16000, learning_rate=1e-3, n_demos=40),
        adapt=_adapt(max_rollouts=250, interleave_ratio=(1, 1), learning_rate=1e-4, sl_learning_rate=1e-4,
                     query_points=21, solution_points=200, exploration_scale=0.5, track_retention=False,
                     stop_when="batch"),
    ),
    "pick_place": ExperimentConfig(
        "pick_place", "none", sm_width=6, gamma_width=1,
        encoder=(128, 128, 64, 32), decoder=(128, 128, 128, 12),
    ),
    "pouring": ExperimentConfig(
        "pouring", "none", sm_width=1, gamma_width=1,
        encoder=(128, 128, 64, 32), decoder=(128, 128, 128, 2),
    ),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return loads(dumps(PRESETS[name]))
