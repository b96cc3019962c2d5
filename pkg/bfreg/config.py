"""
Run Configuration
=================

One JSON document describes a run. ``load_config`` rejects unknown keys,
fills the per-task hyperparameter defaults, checks that every path the task
needs is present, and returns a ``RunConfig`` whose ``to_dict()`` is written
beside the results.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

from .errors import ConfigError
from .model import HeadSpec, ModelConfig
from .tasks import TrainConfig
from .tasks.forecasting import FORECASTERS
from .trajectory import CNFConfig
from .utils import PathLike, sha256_json

TASKS = ("impute", "classify", "forecast", "trajectory", "discover", "synth", "validate")

# lr, epochs, d, head width
TASK_DEFAULTS: Dict[str, Tuple[float, int, int, int]] = {
    "impute": (1e-3, 200, 4, 1024),
    "classify": (5e-4, 200, 4, 256),
    "forecast": (1e-4, 2000, 16, 512),
    "trajectory": (1e-2, 200, 4, 0),
    "discover": (1e-3, 200, 4, 1024),
}

# first level, every upper level
ALPHA_DEFAULTS: Dict[str, Tuple[float, float]] = {
    "impute": (1e-3, 0.0),
    "discover": (1e-3, 0.0),
    "classify": (1e-5, 1e-5),
    "forecast.simultaneous": (1e-2, 0.0),
    "forecast.recurrent": (5e-3, 0.0),
}

REQUIRED_PATHS: Dict[str, Tuple[str, ...]] = {
    "impute": ("knowledge", "data"),
    "classify": ("knowledge", "data"),
    "forecast": ("knowledge", "data"),
    "trajectory": ("knowledge", "data"),
    "discover": ("knowledge", "data"),
    "synth": (),
    "validate": ("knowledge",),
}

PATH_KEYS = ("knowledge", "data", "mask", "pretrained")


@dataclass
class RunConfig:
    task: str
    seed: int = 0
    out: str = "bfreg-out"

    # inputs
    knowledge: Optional[str] = None
    data: Optional[str] = None
    mask: Optional[str] = None
    pretrained: Optional[str] = None

    # model
    variant: str = "enhanced"
    d: Optional[int] = None
    hops: int = 1
    alpha: Optional[Union[float, Dict[str, float]]] = None
    update_mode: str = "sum"
    activation: str = "tanh"
    head_hidden: Optional[Tuple[int, ...]] = None
    levels: Optional[Tuple[str, ...]] = None
    intra_level: bool = True
    inter_level: bool = True

    # optimizer
    lr: Optional[float] = None
    epochs: Optional[int] = None
    batch_size: int = 32
    mask_probability: float = 0.6
    loss_support: str = "measured"
    select_best: bool = True

    # forecasting
    horizon: int = 1
    forecaster: str = "simultaneous"

    # trajectory
    steps: int = 40
    pieces: Tuple[str, ...] = ("intra",)
    field_hidden: int = 4
    hyper_hidden: int = 16
    sample_size: Optional[int] = None
    train_timestamps: int = 2

    # discovery
    node: Optional[str] = None
    runs: int = 10
    k: int = 20
    level: Optional[str] = None
    restrict_to_node: bool = True
    workers: int = 1

    # synthetic data
    synth: Dict[str, Any] = field(default_factory=dict)
    samples: int = 500
    series: int = 50
    series_steps: int = 10
    cells: int = 200
    classes: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.forecaster not in FORECASTERS:
            raise ConfigError(f"forecaster must be one of {tuple(FORECASTERS)}, got {self.forecaster!r}")
        for name in ("head_hidden", "levels", "pieces"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, tuple(value))
        if self.train_timestamps < 2:
            raise ConfigError(f"trajectory training needs >= 2 timestamps, got {self.train_timestamps}")
        if self.task == "discover" and not self.node:
            raise ConfigError("task 'discover' requires 'node'")

    @property
    def alpha_key(self) -> str:
        return f"forecast.{self.forecaster}" if self.task == "forecast" else self.task

    def resolve_alpha(self, levels: Sequence[str]) -> Union[float, Dict[str, float]]:
        """The configured alpha, else the task default spread over ``levels``."""
        if self.alpha is not None:
            return self.alpha
        first, upper = ALPHA_DEFAULTS.get(self.alpha_key, (0.0, 0.0))
        return {level: (first if i == 0 else upper) for i, level in enumerate(levels)}

    def model_config(self, levels: Sequence[str], output_size: int) -> ModelConfig:
        kind = "recurrent" if self.task == "forecast" and self.forecaster == "recurrent" else "mlp"
        return ModelConfig(
            variant=self.variant, d=self.d, hops=self.hops, alpha=self.resolve_alpha(levels),
            update_mode=self.update_mode, activation=self.activation,
            head=HeadSpec(output_size, self.head_hidden, kind), levels=self.levels,
            intra_level=self.intra_level, inter_level=self.inter_level)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch_size,
                           mask_probability=self.mask_probability, loss_support=self.loss_support,
                           select_best=self.select_best)

    def cnf_config(self) -> CNFConfig:
        return CNFConfig(lr=self.lr, epochs=self.epochs, steps=self.steps, pieces=self.pieces,
                         hidden=self.field_hidden, hyper_hidden=self.hyper_hidden,
                         activation=self.activation, sample_size=self.sample_size,
                         select_best=self.select_best)

    def to_dict(self) -> Dict[str, Any]:
        doc = asdict(self)
        for name in ("head_hidden", "levels", "pieces"):
            if doc[name] is not None:
                doc[name] = list(doc[name])
        return doc

    def config_hash(self) -> str:
        """Digest of the resolved config, without the output directory."""
        doc = self.to_dict()
        doc.pop("out")
        return sha256_json(doc)


def apply_defaults(doc: Dict[str, Any]) -> Dict[str, Any]:
    task = doc.get("task")
    if task not in TASK_DEFAULTS:
        return doc
    lr, epochs, d, width = TASK_DEFAULTS[task]
    doc.setdefault("lr", lr)
    doc.setdefault("epochs", epochs)
    doc.setdefault("d", d)
    if width:
        doc.setdefault("head_hidden", [width])
    return doc


def check_paths(config: RunConfig):
    missing = [key for key in REQUIRED_PATHS[config.task] if not getattr(config, key)]
    if missing:
        raise ConfigError(f"task '{config.task}' requires path(s): {', '.join(missing)}")
    for key in PATH_KEYS:
        value = getattr(config, key)
        if value and not Path(value).exists():
            raise ConfigError(f"'{key}' path does not exist: {value}")


def config_from_dict(doc: Mapping[str, Any], base: Optional[PathLike] = None) -> RunConfig:
    """
    Build a resolved config. Relative paths are taken relative to ``base``
    (the directory holding the config file).
    """
    doc = dict(doc)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "task" not in doc:
        raise ConfigError("config has no 'task'")
    if base is not None:
        for key in PATH_KEYS:
            if doc.get(key) and not Path(doc[key]).is_absolute():
                doc[key] = str(Path(base) / doc[key])
    try:
        config = RunConfig(**apply_defaults(doc))
    except TypeError as e:
        raise ConfigError(f"invalid config: {e}") from None
    check_paths(config)
    logging.debug(f"BFReg: resolved {config.task} config (lr={config.lr}, epochs={config.epochs})")
    return config


def load_config(path: PathLike) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc, base=path.parent)
