"""Flat run configuration shared by every CLI command.

The config file is a single flat JSON object whose keys are the field names
of :class:`RunConfig`; unknown keys are rejected by name. Relative paths are
resolved against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .core import ValidationError
from .encoder import EncoderConfig
from .ensemble import EnsembleSpec
from .losses import LossWeights
from .clustering import TrainSchedule
from .synth import SynthConfig


class ConfigError(ValidationError):
    pass


@dataclass
class RunConfig:
    out: str = "run"
    manifest: str = ""
    checkpoint: str = ""
    seed: int = 7
    # synthetic corpus
    videos: int = 20
    t_min: int = 400
    t_max: int = 800
    n_min: int = 6
    n_max: int = 12
    dim: int = 16
    classes: int = 8
    mu: float = 4.0
    sigma: float = 1.0
    min_len: int = 10
    timestamp_mode: str = "middle"
    # pseudo-label ensembling
    ensemble: str = "energy,kmedoids,agnes"
    views: str = ""
    kmedoids_max_iters: int = 50
    agnes_max_frames: int = 20_000
    agnes_downsample: int = 1
    # training
    warmup_epochs: int = 50
    ic_epochs: int = 20
    lr: float = 5e-4
    lam: float = 0.15
    beta: float = 0.075
    gamma: float = 0.15
    theta: float = 4.0
    smoothing_mode: str = "clamp"
    propagation: str = "clustering"
    hidden_dim: int = 64
    layers: int = 4
    kernel: int = 3

    def __post_init__(self):
        for name in ("lam", "beta", "gamma", "theta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"config key {name!r} must be >= 0")

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def manifest_path(self) -> Path:
        return Path(self.manifest) if self.manifest else self.out_dir / "data" / "manifest.txt"

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else self.out_dir / "model.ckpt"

    def synth(self) -> SynthConfig:
        return SynthConfig(self.videos, self.t_min, self.t_max, self.n_min, self.n_max, self.dim,
                           self.classes, self.mu, self.sigma, self.min_len, self.seed, self.timestamp_mode)

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec.parse(self.ensemble, self.views, kmedoids_max_iters=self.kmedoids_max_iters,
                                  agnes_max_frames=self.agnes_max_frames,
                                  agnes_downsample=self.agnes_downsample)

    def weights(self) -> LossWeights:
        return LossWeights(self.lam, self.beta, self.gamma, self.theta, self.smoothing_mode)

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(self.warmup_epochs, self.ic_epochs, self.lr, self.weights(), self.seed,
                             self.propagation)

    def encoder(self, in_dim: int, num_classes: int) -> EncoderConfig:
        return EncoderConfig(in_dim, num_classes, self.hidden_dim, self.layers, self.kernel, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def coerce(key: str, value):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    cast = _CASTS[FIELD_TYPES[key]]
    if cast is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if cast is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str) and cast is not str:
        try:
            return cast(value)
        except ValueError:
            raise ConfigError(f"config key {key!r}: cannot parse {value!r} as {cast.__name__}") from None
    if not isinstance(value, cast) or isinstance(value, bool):
        raise ConfigError(f"config key {key!r} must be {cast.__name__}, got {type(value).__name__}")
    return value


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    values: dict = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a flat JSON object")
        base = path.parent
        for key, value in raw.items():
            values[key] = coerce(key, value)
        for key in ("out", "manifest", "checkpoint"):
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
    for key, value in (overrides or {}).items():
        values[key] = coerce(key, value)
    return RunConfig(**values)
