"""Flat JSON run configuration."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .eventlog import DEFAULT_TIMESTAMP_FORMAT
from .gumbel import TemperatureSchedule
from .seq2seq import ModelConfig
from .training import TrainConfig

WORKDIR_ENV = "SUFFIXGAN_WORKDIR"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    log: str | None = None
    workdir: str = "work"
    case_column: str = "case_id"
    activity_column: str = "activity"
    timestamp_column: str = "timestamp"
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT
    split: list[float] = field(default_factory=lambda: [0.8, 0.15, 0.05])
    seed: int = 0
    # training
    learning_rate: float = 5e-5
    clip_norm: float = 1.0
    clip_scope: str = "layer"
    epochs: int = 500
    batch_size: int = 128
    supervised_time_weight: float = 1.0
    adversarial_weight: float = 1.0
    tau_start: float = 0.9
    tau_min: float = 0.05
    # model
    hidden_size: int = 200
    num_layers: int = 5
    init_std: float = 0.05
    # decoding / evaluation
    k: int = 1
    max_len: int | None = None
    score_eos: bool = True
    restricted_dl: bool = True
    jobs: int = 1

    def __post_init__(self):
        if len(self.split) != 3:
            raise ConfigError("split needs three ratios (train, test, validation)")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.max_len is not None and self.max_len < 1:
            raise ConfigError("max_len must be >= 1")

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides) -> "RunConfig":
        """Read a JSON file, then apply the environment and non-None ``overrides``."""
        data: dict = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if os.environ.get(WORKDIR_ENV):
            data["workdir"] = os.environ[WORKDIR_ENV]
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def column_map(self) -> dict[str, str]:
        return {"case": self.case_column, "activity": self.activity_column, "timestamp": self.timestamp_column}

    def train_config(self, epochs: int | None = None) -> TrainConfig:
        total = self.epochs if epochs is None else epochs
        return TrainConfig(
            learning_rate=self.learning_rate,
            clip_norm=self.clip_norm,
            clip_scope=self.clip_scope,
            epochs=total,
            batch_size=self.batch_size,
            seed=self.seed,
            schedule=TemperatureSchedule(self.tau_start, self.tau_min, self.epochs),
            supervised_time_weight=self.supervised_time_weight,
            adversarial_weight=self.adversarial_weight,
        )

    def model_config(self, n_labels: int) -> ModelConfig:
        return ModelConfig(n_labels, self.hidden_size, self.num_layers, self.init_std)

    def to_json(self) -> dict:
        return asdict(self)
