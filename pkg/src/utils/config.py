"""
Run configuration.

A RunConfig is resolved from three layers, later layers winning:
dataclass defaults, an optional JSON config file, command-line flags.
The resolved config is echoed into every artifact a command writes.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Tuple

from src.data.domain import Modality
from src.data.preprocess import WindowConfig
from src.data.synthgen import SessionPlan
from src.errors import ConfigError
from src.evaluation.training import TrainConfig
from src.models.builders import parse_model_name

_logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "GAZEGEST_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
TASKS = ("gesture", "userid")


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR


@dataclass(frozen=True)
class PlanConfig:
    """Parameters of a synthetic session."""
    subjects: int = 8
    repetitions: int = 3
    alpha_min: float = 0.3
    alpha_max: float = 0.95
    sample_rate: float = 60.0
    dot_speed: float = 100.0

    def validate(self) -> None:
        if self.subjects < 1:
            raise ConfigError(f"--subjects must be >= 1, got {self.subjects}")
        if self.repetitions < 1:
            raise ConfigError(f"--reps must be >= 1, got {self.repetitions}")
        if not 0.0 <= self.alpha_min <= self.alpha_max <= 1.0:
            raise ConfigError(f"alpha range [{self.alpha_min}, {self.alpha_max}] must lie inside [0, 1]")

    def to_plan(self, seed: int) -> SessionPlan:
        self.validate()
        return SessionPlan.synthetic(self.subjects, seed, self.repetitions, (self.alpha_min, self.alpha_max),
                                     sample_rate=self.sample_rate, dot_speed=self.dot_speed)


@dataclass
class RunConfig:
    command: str = "eval"
    input: Optional[str] = None
    output_dir: str = field(default_factory=default_output_dir)
    seed: int = 7
    model: str = "tinyhar"
    task: str = "gesture"
    modality: str = Modality.EYE_HEAD.value
    folds: int = 4
    jobs: int = 1
    window: WindowConfig = field(default_factory=WindowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)

    def validate(self) -> None:
        parse_model_name(self.model)
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; valid tasks: {', '.join(TASKS)}")
        try:
            Modality.parse(self.modality)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {self.jobs}")
        if self.folds < 2:
            raise ConfigError(f"--folds must be >= 2, got {self.folds}")
        self.window.validate()
        self.train.validate()
        self.plan.validate()

    @property
    def modality_enum(self) -> Modality:
        return Modality.parse(self.modality)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        nested = {"window": WindowConfig, "train": TrainConfig, "plan": PlanConfig}
        kwargs = _checked_kwargs(cls, {k: v for k, v in data.items() if k not in nested}, "config")
        for key, kind in nested.items():
            if key in data:
                kwargs[key] = kind(**_checked_kwargs(kind, data[key], key))
        return cls(**kwargs)


def _checked_kwargs(kind, data: Mapping[str, Any], where: str) -> Dict[str, Any]:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(kind)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    return dict(data)


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _merge(base: Dict[str, Any], layer: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in layer.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_config(command: str, config_file: Optional[str] = None,
                   flags: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig: flags > config file > defaults.

    Args:
        command: Subcommand name
        config_file: Optional JSON file with any subset of RunConfig keys
        flags: Nested flag values; None means "not given"

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: unreadable file, unknown keys or invalid values
    """
    data = RunConfig().to_dict()
    if config_file:
        data = _merge(data, load_config_file(config_file))
        _logger.info("loaded config file %s", config_file)
    data = _merge(data, flags or {})
    data["command"] = command
    try:
        config = RunConfig.from_dict(data)
    except TypeError as e:
        raise ConfigError(f"invalid config: {e}") from None
    config.validate()
    return config


def split_overrides(flags: Mapping[str, Any], groups: Mapping[str, Tuple[str, ...]]) -> Dict[str, Any]:
    """Nest flat flag values: keys listed under a group move into that sub-dict."""
    nested: Dict[str, Any] = {}
    grouped = {key: group for group, keys in groups.items() for key in keys}
    for key, value in flags.items():
        if key in grouped:
            nested.setdefault(grouped[key], {})[key] = value
        else:
            nested[key] = value
    return nested
