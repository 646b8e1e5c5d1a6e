"""Experiment configuration.

Configs are TOML files with one table per section. Every key is typed and
validated; unknown sections or keys are rejected so that a config file is
a complete record of an experiment::

    [model]
    arch = "tiny_cnn"
    num_classes = 10

    [loss]
    alpha1 = 0.2        # alpha2 is always 1 - alpha1
    beta = 1e-7
    temperature = 3.0

Overrides use dotted keys, e.g. ``{"fusion.variant": "add_only"}``.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import tomli

from .errors import ConfigError
from .fusion import FusionVariant
from .losses import LossWeights


@dataclass
class ModelConfig:
    arch: str = "resnet18_cifar"
    num_classes: int = 100
    input_size: int = 32


@dataclass
class FusionConfig:
    variant: str = "mixed"


@dataclass
class StudentsConfig:
    enabled: List[bool] = field(default_factory=lambda: [True, True, True])
    reduce_target: int = 4


@dataclass
class LossConfig:
    alpha1: float = 0.2
    beta: float = 1e-7
    temperature: float = 3.0
    detach_teacher: bool = True

    @property
    def alpha2(self) -> float:
        return 1.0 - self.alpha1

    def weights(self) -> LossWeights:
        return LossWeights(self.alpha1, self.alpha2, self.beta, self.temperature,
                           self.detach_teacher)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr0: float = 0.1
    lr_milestones: List[int] = field(default_factory=lambda: [100, 150])
    lr_decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    eval_every: int = 1
    deterministic: bool = True
    checkpoint_every: int = 0  # 0 = only the final epoch


@dataclass
class DataConfig:
    source: str = "cifar100"  # cifar100 | synth
    dir: str = ""
    subset_per_class: int = 0  # 0 = full training split
    subset_seed: int = 0
    augment: bool = True
    synth_train: int = 1000
    synth_test: int = 500
    synth_classes: int = 10
    synth_seed: int = 0


@dataclass
class DistillConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    students: StudentsConfig = field(default_factory=StudentsConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> "DistillConfig":
        FusionVariant.parse(self.fusion.variant)
        self.loss.weights()
        t = self.train
        for name in ("epochs", "batch_size", "eval_every"):
            minimum = 0 if name == "epochs" else 1
            if getattr(t, name) < minimum:
                raise ConfigError(f"train.{name} must be >= {minimum}, got {getattr(t, name)}")
        ms = t.lr_milestones
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"train.lr_milestones must be strictly increasing, got {ms}")
        if ms and (ms[0] < 0 or (t.epochs > 0 and ms[-1] >= t.epochs)):
            raise ConfigError(f"train.lr_milestones must lie in [0, train.epochs={t.epochs}), got {ms}")
        if t.lr0 <= 0 or t.lr_decay <= 0:
            raise ConfigError("train.lr0 and train.lr_decay must be > 0")
        if not 0 <= t.momentum < 1:
            raise ConfigError(f"train.momentum must lie in [0, 1), got {t.momentum}")
        if t.weight_decay < 0:
            raise ConfigError("train.weight_decay must be >= 0")
        if self.model.num_classes < 2:
            raise ConfigError("model.num_classes must be >= 2")
        if self.students.reduce_target < 1:
            raise ConfigError("students.reduce_target must be >= 1")
        if self.data.source not in ("cifar100", "synth"):
            raise ConfigError(f"data.source must be 'cifar100' or 'synth', got {self.data.source!r}")
        if self.data.source == "synth" and self.data.synth_classes != self.model.num_classes:
            raise ConfigError("data.synth_classes must equal model.num_classes")
        if self.data.source == "cifar100" and self.model.num_classes != 100:
            raise ConfigError("model.num_classes must be 100 for data.source = 'cifar100'")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "DistillConfig":
        cfg = cls()
        for section, values in raw.items():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(values, dict):
                raise ConfigError(f"[{section}] must be a table")
            for key, value in values.items():
                _assign(cfg, f"{section}.{key}", value)
        return cfg.validate()

    def with_overrides(self, overrides: dict) -> "DistillConfig":
        cfg = DistillConfig.from_dict(self.to_dict())
        for dotted, value in overrides.items():
            _assign(cfg, dotted, value)
        return cfg.validate()


_SECTIONS = {f.name: f.type for f in dataclasses.fields(DistillConfig)}


def _coerce(dotted, value, hint):
    origin = typing.get_origin(hint)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{dotted} must be a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{dotted} must be an integer, got {value!r}")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{dotted} must be true or false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{dotted} must be a string, got {value!r}")
        return value
    if origin in (list, List):
        (inner,) = typing.get_args(hint)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{dotted} must be a list, got {value!r}")
        return [_coerce(dotted, v, inner) for v in value]
    raise ConfigError(f"{dotted}: unsupported type {hint}")


def _assign(cfg: DistillConfig, dotted: str, value) -> None:
    try:
        section, key = dotted.split(".")
    except ValueError:
        raise ConfigError(f"config keys are 'section.key', got {dotted!r}") from None
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section [{section}]")
    sub = getattr(cfg, section)
    hints = typing.get_type_hints(type(sub))
    if key not in hints:
        raise ConfigError(f"unknown config key {dotted}")
    setattr(sub, key, _coerce(dotted, value, hints[key]))


def load_config(path) -> DistillConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return DistillConfig.from_dict(raw)


def cifar100_recipe() -> DistillConfig:
    """Reference CIFAR-100 recipe: ResNet-18, 200 epochs, lr 0.1 / 10 at 100, 150."""
    return DistillConfig().validate()


def imagenet_schedule() -> TrainConfig:
    """ImageNet schedule constants. Documented only; ImageNet ingestion is not provided."""
    return TrainConfig(epochs=90, batch_size=256, lr0=0.1, lr_milestones=[30, 60],
                       weight_decay=1e-4)


def desk_cifar100_subset(seed: int = 0, data_dir: str = "", arch: str = "tiny_cnn") -> DistillConfig:
    """Reduced CIFAR-100 protocol: 50 images per class, 30 epochs."""
    cfg = DistillConfig(
        model=ModelConfig(arch=arch, num_classes=100),
        train=TrainConfig(epochs=30, lr_milestones=[15, 25], seed=seed, eval_every=5),
        data=DataConfig(source="cifar100", dir=data_dir, subset_per_class=50, subset_seed=0),
    )
    return cfg.validate()


BASELINE_OVERRIDES = {"students.enabled": [False, False, False], "loss.alpha1": 1.0,
                      "loss.beta": 0.0}
