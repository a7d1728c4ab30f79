"""Experiment configuration: plain dataclasses, validated on load.

A config is one YAML document. Unknown keys are rejected so typos fail
loudly instead of silently falling back to defaults. The top-level ``seed``
drives every random choice in a run (initialization, shuffling, probe
selection, corruption noise); fine-tuning after removal ``i`` uses
``seed + i``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import ConfigDict, TypeAdapter, ValidationError

from ..errors import ConfigError, UnknownCorruption
from ..metrics import MetricDescriptor, make_metric
from ..netlib import Augmentation, Dataset, TrainConfig, load_csv_dir, load_npz, synthetic_images, synthetic_tabular
from ..netlib.spec import ArchitectureSpec, resnet_cifar_spec, transformer_tabular_spec
from ..robustness import CORRUPTION_SEVERITY, CORRUPTIONS, FGSM_EPSILON, AttackConfig

_STRICT = ConfigDict(extra="forbid")


@dataclass
class ArchConfig:
    __pydantic_config__ = _STRICT

    family: Literal["resnet_cifar", "transformer_tabular"] = "resnet_cifar"
    blocks_per_stage: list[int] = field(default_factory=lambda: [3, 3, 3])
    widths: list[int] = field(default_factory=lambda: [8, 16, 32])
    num_blocks: int = 4
    model_dim: int = 64
    heads: int = 4
    projection_dim: int = 128

    def to_spec(self, input_shape, num_classes: int) -> ArchitectureSpec:
        if self.family == "resnet_cifar":
            return resnet_cifar_spec(self.blocks_per_stage, self.widths, input_shape, num_classes)
        return transformer_tabular_spec(
            self.num_blocks, self.model_dim, self.heads, self.projection_dim, input_shape, num_classes
        )


@dataclass
class DataConfig:
    """``synthetic_*`` kinds are generated from ``seed``; ``npz`` and ``csv``
    read ``path`` (``csv`` also needs ``input_shape``)."""

    __pydantic_config__ = _STRICT

    kind: Literal["synthetic_images", "synthetic_tabular", "npz", "csv"] = "synthetic_images"
    path: Optional[str] = None
    input_shape: Optional[list[int]] = None
    n_train: int = 10000
    n_test: int = 2000
    image_size: int = 16
    seq_len: int = 16
    features: int = 6
    num_classes: int = 10
    seed: int = 0

    def load(self, base_dir: Path | None = None) -> Dataset:
        if self.kind == "synthetic_images":
            return synthetic_images(self.n_train, self.n_test, self.image_size, 3, self.num_classes, self.seed)
        if self.kind == "synthetic_tabular":
            return synthetic_tabular(self.n_train, self.n_test, self.seq_len, self.features, self.num_classes, self.seed)
        if self.path is None:
            raise ConfigError(f"data.kind={self.kind} needs data.path")
        path = Path(self.path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if self.kind == "npz":
            return load_npz(path)
        if self.input_shape is None:
            raise ConfigError("data.kind=csv needs data.input_shape")
        return load_csv_dir(path, self.input_shape)


@dataclass
class TrainSection:
    __pydantic_config__ = _STRICT

    epochs: int = 10
    batch_size: int = 128
    lr: float = 0.05
    lr_schedule: Literal["cosine", "constant"] = "cosine"
    momentum: float = 0.9
    weight_decay: float = 5e-4
    random_crop: bool = True
    horizontal_flip: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("need epochs >= 0, batch_size >= 1 and lr > 0")

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            self.epochs, self.batch_size, self.lr, self.lr_schedule, self.momentum, self.weight_decay, seed,
            Augmentation(self.random_crop, self.horizontal_flip),
        )


@dataclass
class FinetuneSection(TrainSection):
    """Per-iteration recovery training; shorter and gentler by default."""

    __pydantic_config__ = _STRICT

    epochs: int = 5
    lr: float = 0.02


@dataclass
class MetricConfig:
    __pydantic_config__ = _STRICT

    name: str
    params: dict[str, float] = field(default_factory=dict)


def _default_metrics() -> list[MetricConfig]:
    return [MetricConfig("linear_cka"), MetricConfig("procrustes"), MetricConfig("bures"),
            MetricConfig("interpolated", {"lam": 0.5})]


@dataclass
class ProbeConfig:
    __pydantic_config__ = _STRICT

    count: int = 512

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("probe count must be at least 2")


@dataclass
class StopRule:
    """``until_no_eligible``: prune while anything is removable.
    ``flop_target``: stop once the FLOP reduction reaches ``flop_target_pct``.
    ``max_iterations``: stop after ``max_iterations`` removals."""

    __pydantic_config__ = _STRICT

    rule: Literal["until_no_eligible", "flop_target", "max_iterations"] = "until_no_eligible"
    flop_target_pct: Optional[float] = None
    max_iterations: Optional[int] = None

    def __post_init__(self):
        if self.rule == "flop_target" and (self.flop_target_pct is None or not 0 <= self.flop_target_pct < 100):
            raise ValueError("flop_target needs flop_target_pct in [0, 100)")
        if self.rule == "max_iterations" and (self.max_iterations is None or self.max_iterations < 0):
            raise ValueError("max_iterations needs a non-negative max_iterations")


@dataclass
class AttackSuite:
    __pydantic_config__ = _STRICT

    fgsm: bool = True
    epsilon: float = FGSM_EPSILON
    corruptions: list[str] = field(default_factory=lambda: list(CORRUPTIONS))
    severity: int = CORRUPTION_SEVERITY
    ood: bool = True
    eval_samples: Optional[int] = None  # evaluate on the first N test samples only
    batch_size: int = 256

    def build(self, data_kind: str) -> list[AttackConfig]:
        attacks = []
        if self.fgsm:
            attacks.append(AttackConfig("fgsm", epsilon=self.epsilon))
        if data_kind == "image":
            attacks += [AttackConfig("corruption", corruption_name=n, severity=self.severity) for n in self.corruptions]
        if self.ood:
            attacks.append(AttackConfig("ood_split"))
        return attacks


@dataclass
class CarbonConfig:
    """Training emissions are estimated from FLOPs at a nominal sustained
    throughput, so reports do not depend on the speed of the host."""

    __pydantic_config__ = _STRICT

    power_watts: float = 300.0
    intensity_kg_per_kwh: float = 0.475
    usd_per_hour: float = 0.0
    throughput_flops: float = 1e12


@dataclass
class ExperimentConfig:
    __pydantic_config__ = _STRICT

    name: str = "experiment"
    seed: int = 0
    out_dir: str = "runs/experiment"
    arch: ArchConfig = field(default_factory=ArchConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainSection = field(default_factory=TrainSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    metrics: list[MetricConfig] = field(default_factory=_default_metrics)
    probes: ProbeConfig = field(default_factory=ProbeConfig)
    stop: StopRule = field(default_factory=StopRule)
    attacks: AttackSuite = field(default_factory=AttackSuite)
    carbon: CarbonConfig = field(default_factory=CarbonConfig)
    latency_repeats: int = 20  # 0 disables latency measurement

    def __post_init__(self):
        if self.latency_repeats != 0 and self.latency_repeats < 10:
            raise ValueError("latency_repeats must be 0 (off) or at least 10")

    def metric_descriptors(self) -> list[MetricDescriptor]:
        return [make_metric(m.name, **m.params) for m in self.metrics]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_ADAPTER = TypeAdapter(ExperimentConfig)


def parse_config(raw: dict | None) -> ExperimentConfig:
    try:
        cfg = _ADAPTER.validate_python(raw or {})
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.metrics:
        raise ConfigError("metrics: need at least one metric")
    try:
        cfg.metric_descriptors()
        cfg.attacks.build("image")
    except (ValueError, UnknownCorruption) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
