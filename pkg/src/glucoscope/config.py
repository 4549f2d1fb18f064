"""Pipeline configuration: one INI-style ``key = value`` file with sections.

Every key has a default; unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig
from .transforms import TransformConfig
from .windowing import SplitSpec, Thresholds


@dataclass(frozen=True)
class PipelineSection:
    seed: int = 1
    repeats: int = 10


@dataclass(frozen=True)
class SyntheticSection:
    n_patients: int = 4
    days: int = 14
    dropouts_per_patient: int = 1
    dropout_min_hours: float = 2.0
    dropout_max_hours: float = 6.0


@dataclass(frozen=True)
class DataSection:
    interval_min: int = 15
    max_fill_min: float = 45.0
    gap_tolerance_min: float = 30.0


@dataclass(frozen=True)
class ThresholdSection:
    hypo: float = 70.0
    hyper: float = 180.0


@dataclass(frozen=True)
class WindowSection:
    window_hours: int = 24
    step_hours: int = 1
    lookahead_hours: int = 24


@dataclass(frozen=True)
class TransformSection:
    kind: str = "scalogram"
    n_scales: int = 64
    morlet_omega0: float = 6.0
    colormap: str = "grayscale3"
    glucose_min: float = 40.0
    glucose_max: float = 400.0


@dataclass(frozen=True)
class ModelSection:
    input_size: int = 64
    growth_rate: int = 8
    block_layout: str = "2,2"
    head_units: int = 512
    transition_pool: str = "avg"


@dataclass(frozen=True)
class TrainingSection:
    epochs: int = 50
    learning_rate: float = 0.001
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class SplitSection:
    train: float = 0.75
    validation: float = 0.15
    test: float = 0.10
    strategy: str = "random"


@dataclass(frozen=True)
class PipelineConfig:
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    data: DataSection = field(default_factory=DataSection)
    thresholds: ThresholdSection = field(default_factory=ThresholdSection)
    windowing: WindowSection = field(default_factory=WindowSection)
    transform: TransformSection = field(default_factory=TransformSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    split: SplitSection = field(default_factory=SplitSection)

    # -- derived module configs
    @property
    def seed(self) -> int:
        return self.pipeline.seed

    def threshold_config(self) -> Thresholds:
        return Thresholds(self.thresholds.hypo, self.thresholds.hyper)

    def transform_config(self) -> TransformConfig:
        t = self.transform
        return TransformConfig(
            kind=t.kind,
            n_scales=t.n_scales,
            morlet_omega0=t.morlet_omega0,
            colormap=t.colormap,
            glucose_range=(t.glucose_min, t.glucose_max),
            image_size=self.model.input_size,
        )

    def model_config(self, repeat: int = 0) -> ModelConfig:
        m = self.model
        return ModelConfig(
            input_size=m.input_size,
            growth_rate=m.growth_rate,
            block_layout=tuple(int(b) for b in m.block_layout.split(",")),
            head_units=m.head_units,
            seed=self.seed + repeat,
            transition_pool=m.transition_pool,
        )

    def train_config(self, repeat: int = 0) -> TrainConfig:
        t = self.training
        return TrainConfig(
            epochs=t.epochs,
            learning_rate=t.learning_rate,
            batch_size=t.batch_size,
            beta1=t.beta1,
            beta2=t.beta2,
            epsilon=t.epsilon,
            seed=self.seed + repeat,
        )

    def split_spec(self) -> SplitSpec:
        s = self.split
        return SplitSpec(s.train, s.validation, s.test, seed=self.seed, strategy=s.strategy)

    def with_overrides(self, **sections: dict[str, Any]) -> "PipelineConfig":
        """``cfg.with_overrides(training={"epochs": 2})``."""
        updates = {}
        for name, values in sections.items():
            updates[name] = dataclasses.replace(getattr(self, name), **values)
        return dataclasses.replace(self, **updates)

    def validate(self) -> "PipelineConfig":
        """Build every derived config once so bad values fail early as ConfigError."""
        try:
            self.threshold_config()
            self.transform_config()
            self.model_config()
            self.train_config()
            self.split_spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        except Exception as exc:  # module-specific precondition errors
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{type(exc).__name__}: {exc}") from None
        m = self.model_config()
        if m.input_size % m.downsampling or m.input_size < m.downsampling:
            raise ConfigError(f"model.input_size {m.input_size} must be a multiple of {m.downsampling}")
        if self.pipeline.repeats < 1:
            raise ConfigError("pipeline.repeats must be at least 1")
        return self


def _coerce(raw: str, typ: Any, where: str) -> Any:
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ}") from None


def parse_config(text: str) -> PipelineConfig:
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    sections = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    values: dict[str, Any] = {}
    for sec in cp.sections():
        if sec not in sections:
            raise ConfigError(f"unknown section [{sec}]")
        cls = sections[sec].default_factory  # type: ignore[misc]
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in cp[sec].items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            kwargs[key] = _coerce(raw, known[key].type, f"[{sec}] {key}")
        values[sec] = cls(**kwargs)
    return PipelineConfig(**values).validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        section = getattr(cfg, f.name)
        lines.append(f"[{f.name}]")
        for sf in dataclasses.fields(section):
            lines.append(f"{sf.name} = {getattr(section, sf.name)!s}")
        lines.append("")
    return "\n".join(lines)
