"""Experiment configuration: a flat key=value text format.

Lines are ``key = value``; ``#`` starts a comment; unknown keys are errors
rather than silently ignored.  The canonical serialization (sorted keys) is
hashed with SHA-256 and that hash is stamped into every artifact a run
writes, so any output can be traced back to its exact settings.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .encoder import EncoderConfig
from .errors import ConfigError
from .losses import LossConfig
from .training import TrainConfig


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_root: str = ""
    out_dir: str = "runs/latest"
    alpha: float = 0.05
    split_seed: int = 0
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    train_seed: int = 0
    eval_seed: int = 1
    architecture: str = "tiny-conv"
    embedding_dim: int = 64
    input_size: int = 64
    channels: tuple[int, int, int] = (8, 16, 32)
    init_seed: int = 0
    margin: float = 0.4
    lambda_ss: float = 0.1
    lambda_pseudo: float = 1.0
    labeled_batch: int = 256
    unlabeled_batch: int = 1024
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 10
    backprop_chunk: int = 128
    hist_bins: int = 6

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            architecture=self.architecture,
            embedding_dim=self.embedding_dim,
            input_size=self.input_size,
            channels=self.channels,
            init_seed=self.init_seed,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            margin=self.margin,
            lambda_ss=self.lambda_ss,
            lambda_pseudo=self.lambda_pseudo,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            labeled_batch=self.labeled_batch,
            unlabeled_batch=self.unlabeled_batch,
            loss=self.loss_config(),
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            epochs=self.epochs,
            seed=self.train_seed,
            backprop_chunk=self.backprop_chunk,
        )


def _parse_channels(text: str) -> tuple[int, int, int]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f"channels must be three comma-separated ints, got {text!r}")
    return tuple(int(p) for p in parts)


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


_FIELDS = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELDS[key]
    try:
        if key == "channels":
            return _parse_channels(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def canonical_text(config: ExperimentConfig) -> str:
    lines = [
        f"{name} = {_format_value(getattr(config, name))}" for name in sorted(_FIELDS)
    ]
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_text(config).encode("utf-8")).hexdigest()[:16]


def save_config(config: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_text(config), encoding="utf-8")
    return path
