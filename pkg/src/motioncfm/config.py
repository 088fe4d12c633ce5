"""Run configuration: JSON file, dotted overrides, validation and the resolved echo."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from .data.synthetic import DatasetSpec
from .metrics.embedders import EMBEDDERS
from .metrics.jitter import _order
from .nn.predictor import VARIANTS, PredictorConfig
from .sampler import SampleConfig
from .trainer import TrainConfig

SWEEP_AXES = ("steps", "guidance")


class ConfigError(ValueError):
    """Invalid configuration or override."""


@dataclass
class ModelSection:
    variant: str = "frame_mlp"
    hidden_dim: int | None = None
    layer_count: int | None = None
    head_count: int | None = None
    ff_dim: int | None = None
    max_frames: int = 196
    positional_encoding: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"model.variant must be one of {VARIANTS}, got {self.variant!r}")

    def build(self, feature_dim, n_conditions) -> PredictorConfig:
        overrides = {k: v for k, v in asdict(self).items() if k != "variant" and v is not None}
        return PredictorConfig.desk(self.variant, feature_dim, n_conditions, **overrides)


@dataclass
class SampleSection:
    steps: int = 100
    guidance_scale: float = 2.5
    frames: int = 120
    count: int = 4  # motions per prompt for the sample command
    chunk: int = 64

    def __post_init__(self):
        if self.count < 1 or self.chunk < 1:
            raise ConfigError("sample.count and sample.chunk must be >= 1")
        self.build(0, 0.0)

    def build(self, seed, sigma_min) -> SampleConfig:
        return SampleConfig(steps=self.steps, guidance_scale=self.guidance_scale,
                            sigma_min=sigma_min, frames=self.frames, seed=seed)


@dataclass
class MetricSection:
    embedder: str = "temporal_stats"
    output_dim: int = 32
    trials: int = 20
    jitter_order: str = "jerk"
    diversity_pairs: int = 300
    r_batch_size: int = 32
    mmodality_pairs: int = 10
    heldout_per_family: int = 50

    def __post_init__(self):
        if self.embedder not in EMBEDDERS:
            raise ConfigError(f"metrics.embedder must be one of {sorted(EMBEDDERS)}")
        _order(self.jitter_order)
        for name in ("output_dim", "trials", "diversity_pairs", "r_batch_size", "mmodality_pairs",
                     "heldout_per_family"):
            if getattr(self, name) < 1:
                raise ConfigError(f"metrics.{name} must be >= 1")


@dataclass
class AblationSection:
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    objectives: list = field(default_factory=lambda: ["target", "vector_field"])

    def __post_init__(self):
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("ablation.seeds must be a non-empty list of distinct integers")
        if sorted(self.objectives) != ["target", "vector_field"]:
            raise ConfigError("ablation.objectives must name both 'target' and 'vector_field'")


@dataclass
class SweepSection:
    axis: str = "steps"
    values: list = field(default_factory=lambda: [5, 10, 25, 50, 100])

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}")
        if not self.values:
            raise ConfigError("sweep.values must be non-empty")


@dataclass
class RunConfig:
    """Everything a command needs; the echo of this object reproduces the run.

    ``seed`` drives training, sampling and evaluation. ``dataset.seed``
    left as ``None`` resolves to ``seed``.
    """

    seed: int = 0
    dataset: dict = field(default_factory=dict)
    model: ModelSection = field(default_factory=ModelSection)
    train: dict = field(default_factory=dict)
    sample: SampleSection = field(default_factory=SampleSection)
    metrics: MetricSection = field(default_factory=MetricSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(**{k: v for k, v in self.dataset.items() if k != "seed"})

    @property
    def dataset_seed(self) -> int:
        return self.seed if self.dataset.get("seed") is None else int(self.dataset["seed"])

    def train_config(self, seed=None, **overrides) -> TrainConfig:
        values = dict(self.train, seed=self.seed if seed is None else seed)
        values.update(overrides)
        return TrainConfig(**values)

    def to_dict(self):
        return {
            "seed": self.seed,
            "dataset": dict(self.dataset_spec().to_dict(), seed=self.dataset_seed),
            "model": asdict(self.model),
            "train": {k: v for k, v in self.train_config().to_dict().items() if k != "seed"},
            "sample": asdict(self.sample),
            "metrics": asdict(self.metrics),
            "ablation": asdict(self.ablation),
            "sweep": asdict(self.sweep),
        }

    @classmethod
    def from_dict(cls, data):
        data = copy.deepcopy(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sections = {"model": ModelSection, "sample": SampleSection, "metrics": MetricSection,
                    "ablation": AblationSection, "sweep": SweepSection}
        kwargs = {}
        try:
            for key, value in data.items():
                if key in sections:
                    if not isinstance(value, dict):
                        raise ConfigError(f"section {key!r} must be an object")
                    kwargs[key] = sections[key](**value)
                else:
                    kwargs[key] = value
            cfg = cls(**kwargs)
            if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
                raise ConfigError("seed must be a non-negative integer")
            if "seed" in cfg.train:
                raise ConfigError("train.seed is not configurable; use the top-level seed")
            cfg.dataset_spec()
            cfg.train_config()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def parse_override(text):
    """Split ``a.b.c=value``; the value is parsed as JSON when possible."""
    path, sep, raw = text.partition("=")
    if not sep or not path:
        raise ConfigError(f"override {text!r} is not of the form key.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.split("."), value


def apply_override(data, keys, value):
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {'.'.join(keys)}: {key!r} is not a section")
    node[keys[-1]] = value


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    """Build a :class:`RunConfig` from an optional JSON file, ``--set`` overrides and ``--seed``."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for text in overrides:
        apply_override(data, *parse_override(text))
    if seed is not None:
        data["seed"] = seed
    return RunConfig.from_dict(data)


def write_config(config: RunConfig, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
