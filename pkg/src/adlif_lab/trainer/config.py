"""Dataclass configs for networks and training runs, loadable from JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


@dataclass
class SurrogateConfig:
    alpha: float = 5.0
    c: float = 0.4

    def __post_init__(self):
        if not (self.alpha > 0 and self.c > 0):
            raise ConfigError("surrogate alpha and c must be positive")


@dataclass
class LayerConfig:
    """One hidden layer. ``kind`` is ``lif``, ``ef`` or ``se``."""

    kind: str = "se"
    size: int = 128
    recurrent: bool = True
    tau_u_range: tuple[float, float] = (5.0, 25.0)
    tau_w_range: tuple[float, float] = (60.0, 300.0)
    q: float = 120.0

    def __post_init__(self):
        if self.kind not in ("lif", "ef", "se"):
            raise ConfigError(f"unknown neuron kind {self.kind!r}")
        if self.size < 1:
            raise ConfigError("layer size must be positive")
        self.tau_u_range = tuple(float(x) for x in self.tau_u_range)
        self.tau_w_range = tuple(float(x) for x in self.tau_w_range)
        for lo, hi in (self.tau_u_range, self.tau_w_range):
            if not (0 < lo <= hi):
                raise ConfigError("time-constant ranges need 0 < min <= max")


@dataclass
class NetworkConfig:
    n_inputs: int
    n_outputs: int
    layers: list[LayerConfig] = field(default_factory=lambda: [LayerConfig()])
    tau_out: float | tuple[float, float] = 15.0
    threshold: float = 1.0
    dt: float = 1.0
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    dropout: float = 0.0
    spike_mode: str = "heaviside"
    dtype: str = "float64"

    def __post_init__(self):
        self.layers = [l if isinstance(l, LayerConfig) else LayerConfig(**l) for l in self.layers]
        if isinstance(self.surrogate, dict):
            self.surrogate = SurrogateConfig(**self.surrogate)
        if isinstance(self.tau_out, (list, tuple)):
            lo, hi = (float(x) for x in self.tau_out)
            if not (0 < lo <= hi):
                raise ConfigError("tau_out range needs 0 < min <= max")
            self.tau_out = (lo, hi)
        elif not self.tau_out > 0:
            raise ConfigError("tau_out must be positive")
        if self.spike_mode not in ("heaviside", "smooth"):
            raise ConfigError("spike_mode must be heaviside or smooth")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("dtype must be float64 or float32")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")
        if not self.threshold > 0:
            raise ConfigError("threshold must be positive")

    @property
    def trainable_tau_out(self) -> bool:
        return isinstance(self.tau_out, tuple)


@dataclass
class TrainConfig:
    """Optimization settings plus task bookkeeping."""

    task: str = "bsd"
    loss: str = "sum_softmax_ce"
    burn_in: float = 0.8
    lr: float = 0.01
    epochs: int = 100
    batch_size: int = 128
    clip_norm: float = 1.5
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    closed_loop_from: int | None = None
    log_every: int = 1

    def __post_init__(self):
        if self.loss not in ("sum_softmax_ce", "softmax_sum_ce", "per_step_ce", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("need epochs >= 0, batch_size >= 1, lr > 0")
        self.adam_betas = tuple(self.adam_betas)


def _build(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class ExperimentConfig:
    """A full run: network, optimizer and data settings."""

    network: NetworkConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    data: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            net = d["network"]
        except KeyError as e:
            raise ConfigError("config needs a 'network' section") from e
        try:
            return cls(
                network=_build(NetworkConfig, net),
                train=_build(TrainConfig, d.get("train", {})),
                data=dict(d.get("data", {})),
                eval=dict(d.get("eval", {})),
                name=d.get("name", ""),
            )
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ExperimentConfig:
    try:
        with open(Path(path)) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return ExperimentConfig.from_dict(d)
