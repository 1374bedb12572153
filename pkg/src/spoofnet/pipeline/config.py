"""Experiment configuration read from a sectioned ``key = value`` (TOML) file.

Sections: ``[experiment]`` (training hyperparameters), ``[model]``
(architecture, see ``ModelConfig``), ``[paths]``, ``[rawboost]`` (augmentation
ranges) and an optional ``[tdcf]`` cost model. Relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..metrics import TdcfParams
from ..model import ModelConfig
from ..rawboost import STRATEGIES, AugmentationConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# front-end family -> (learning rate, batch size)
HYPERPARAMETER_DEFAULTS = {"ssl": (1e-6, 14), "sinc": (1e-4, 24)}
PATH_KEYS = ("train_protocol", "train_audio", "dev_protocol", "dev_audio", "eval_protocol",
             "eval_audio", "eval_key", "out_dir")


@dataclass(frozen=True)
class Paths:
    train_protocol: Path = None
    train_audio: Path = None
    dev_protocol: Path = None
    dev_audio: Path = None
    eval_protocol: Path = None
    eval_audio: Path = None
    eval_key: Path = None
    out_dir: Path = Path("runs")

    @classmethod
    def from_mapping(cls, mapping, base=Path(".")):
        unknown = set(mapping) - set(PATH_KEYS)
        if unknown:
            raise ConfigError(f"unknown [paths] keys: {', '.join(sorted(unknown))}")
        return cls(**{k: (Path(base) / v) for k, v in mapping.items()})


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    model: ModelConfig = field(default_factory=ModelConfig)
    rawboost: AugmentationConfig = field(default_factory=AugmentationConfig)
    learning_rate: float = None
    batch_size: int = None
    epochs: int = 100
    seeds: tuple = (0, 1, 2)
    class_weights: tuple = (9.0, 1.0)
    dev_every: int = 1
    paths: Paths = field(default_factory=Paths)
    tdcf: TdcfParams = None

    def __post_init__(self):
        family = "sinc" if self.model.front_end == "sinc" else "ssl"
        lr, bs = HYPERPARAMETER_DEFAULTS[family]
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", lr)
        if self.batch_size is None:
            object.__setattr__(self, "batch_size", bs)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        problems = []
        if self.learning_rate < 0:
            problems.append("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            problems.append("batch_size must be >= 1 and epochs >= 0")
        if not self.seeds:
            problems.append("seeds must not be empty")
        if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
            problems.append("class_weights must be two positive numbers (bona fide, spoof)")
        if self.model.front_end == "ssl_file" and self.da_strategy != "none":
            problems.append("waveform augmentation cannot apply to precomputed ssl_file features")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def da_strategy(self):
        return self.rawboost.strategy

    @property
    def label(self):
        """Row label for result tables: front-end, aggregation, DA."""
        sa = "SA" if self.model.aggregation == "self_attentive" else "max"
        return f"{self.model.front_end}/{self.model.backend}/{sa}/DA={self.da_strategy}"

    def replace(self, **changes):
        """Copy with top-level fields changed; ``da_strategy`` and model keys accepted too."""
        model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
        model_changes = {k: changes.pop(k) for k in list(changes) if k in model_keys}
        if model_changes:
            changes["model"] = dataclasses.replace(self.model, **model_changes)
        if "da_strategy" in changes:
            changes["rawboost"] = dataclasses.replace(self.rawboost,
                                                      strategy=changes.pop("da_strategy"))
        return dataclasses.replace(self, **changes)


EXPERIMENT_KEYS = {"name", "learning_rate", "batch_size", "epochs", "seeds", "class_weights",
                   "dev_every", "da_strategy"}


def config_from_mapping(data, base=Path(".")):
    unknown_sections = set(data) - {"experiment", "model", "paths", "rawboost", "tdcf"}
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown_sections))}")
    exp = dict(data.get("experiment", {}))
    unknown = set(exp) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {', '.join(sorted(unknown))}")
    strategy = exp.pop("da_strategy", "none")
    if strategy not in STRATEGIES:
        raise ConfigError(f"da_strategy must be one of {', '.join(STRATEGIES)}, got {strategy!r}")
    try:
        return ExperimentConfig(
            model=ModelConfig.from_mapping(data.get("model", {})),
            rawboost=AugmentationConfig.from_mapping(data.get("rawboost", {}), strategy=strategy),
            paths=Paths.from_mapping(data.get("paths", {}), base),
            tdcf=TdcfParams.from_mapping(data["tdcf"]) if "tdcf" in data else None,
            **exp)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from None


def load_config(path):
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_mapping(data, path.parent)
