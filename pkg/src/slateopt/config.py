"""Experiment configuration read from JSON.

Every section maps onto one of the library dataclasses; unknown keys and
ill-typed values are reported with their dotted field path, e.g.
``training.lr: expected a number, got 'fast'``.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .data import CategoricalSchema
from .mmr import MmrConfig
from .model import ModelConfig
from .simulate import SimConfig
from .synthetic import SyntheticSpec
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass(frozen=True)
class Paths:
    train: Optional[str] = None
    valid: Optional[str] = None
    test: Optional[str] = None
    criteria: Optional[str] = None
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"


@dataclass(frozen=True)
class SchemaConfig:
    """Categorical columns as 0-based feature indices, one list per variable."""

    variables: tuple[tuple[int, ...], ...] = ()
    names: tuple[str, ...] = ()
    num_features: Optional[int] = None
    score_column: Optional[int] = None  # reserved feature holding base-ranker scores

    def build(self) -> CategoricalSchema:
        if self.num_features is None:
            raise ConfigError("schema.num_features", "required")
        try:
            return CategoricalSchema(self.variables, self.num_features, self.names)
        except ValueError as exc:
            raise ConfigError("schema", str(exc)) from None


@dataclass(frozen=True)
class ModelSection:
    """Model fields that do not depend on the data; dimensions come from the schema."""

    embed_dim: int = 256
    hidden_dim: int = 256
    head_dim: int = 256
    dropout_rate: float = 0.1
    use_condition_info: bool = True
    batch_norm: bool = True

    def build(self, schema: CategoricalSchema, k: int) -> ModelConfig:
        return ModelConfig(feature_dim=schema.m, ci_dim=sum(schema.sizes), slate_size=k,
                           **dataclasses.asdict(self))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    paths: Paths = field(default_factory=Paths)
    schema: SchemaConfig = field(default_factory=SchemaConfig)
    simulation: SimConfig = field(default_factory=SimConfig)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainConfig = field(default_factory=TrainConfig)
    mmr: MmrConfig = field(default_factory=MmrConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)

    def model_config(self, schema: Optional[CategoricalSchema] = None) -> ModelConfig:
        return self.model.build(schema or self.schema.build(), self.training.k)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy whose simulation, training and synthetic streams all derive from ``seed``."""
        return dataclasses.replace(
            self, seed=seed,
            simulation=dataclasses.replace(self.simulation, rng_seed=seed),
            training=dataclasses.replace(self.training, rng_seed=seed),
            synthetic=dataclasses.replace(self.synthetic, seed=seed))

    def to_dict(self) -> dict:
        return _to_jsonable(dataclasses.asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# typed construction


def _convert(value: Any, tp: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(value, inner[0], path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(path, f"expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true or false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp!r}")


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        kwargs[key] = _convert(value, hints[key], sub)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path or cls.__name__, str(exc)) from None


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)
