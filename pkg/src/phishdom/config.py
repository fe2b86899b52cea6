"""Run configuration: one nested object covering every tunable, with strict
parsing, dotted-path overrides, and a canonical hash.

The hash is the sha256 of the sorted-key JSON form and is stamped into every
checkpoint; loading verifies it, so a model can never silently run under a
different configuration than it was trained with.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class UrlConfig:
    dim: int = 64
    num_layers: int = 4
    max_len: int = 200
    kernel: int = 9
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    pool_sizes: tuple[int, ...] = (1, 2, 4)


@dataclass
class GraphConfig:
    feature_dim: int = 100
    num_buckets: int = 16384
    dim: int = 64
    num_layers: int = 2


@dataclass
class PartitionConfig:
    num_groups: int = 5
    iter_num: int = 4
    iter_per: int = 5
    vote_threshold: int = 2


@dataclass
class FusionConfig:
    dim: int = 64
    depth: int = 2
    ffn_multiplier: int = 2


@dataclass
class TrainConfig:
    batch_size: int = 4
    lr: float = 2e-5
    weight_decay: float = 5e-4
    dropout: float = 0.1
    epochs: int = 10
    folds: int = 5
    contrastive: bool = False
    contrastive_weight: float = 0.5
    contrastive_temperature: float = 0.1


@dataclass
class RunConfig:
    seed: int = 42
    url: UrlConfig = field(default_factory=UrlConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.url.dim >= 2, "url.dim must be >= 2"),
            (self.url.num_layers >= 1, "url.num_layers must be >= 1"),
            (self.url.max_len >= 1, "url.max_len must be >= 1"),
            (self.url.kernel >= 1 and self.url.kernel % 2 == 1, "url.kernel must be odd and >= 1"),
            (all(d >= 1 for d in self.url.dilations), "url.dilations must all be >= 1"),
            (all(k >= 1 for k in self.url.pool_sizes), "url.pool_sizes must all be >= 1"),
            (self.graph.feature_dim >= 1, "graph.feature_dim must be >= 1"),
            (self.graph.num_buckets >= 1, "graph.num_buckets must be >= 1"),
            (self.graph.dim >= 1, "graph.dim must be >= 1"),
            (self.graph.num_layers >= 1, "graph.num_layers must be >= 1"),
            (self.partition.num_groups >= 1, "partition.num_groups must be >= 1"),
            (
                1 <= self.partition.iter_num <= self.partition.num_groups,
                "partition.iter_num must be in [1, num_groups]",
            ),
            (self.partition.iter_per >= 1, "partition.iter_per must be >= 1"),
            (self.partition.vote_threshold >= 1, "partition.vote_threshold must be >= 1"),
            (self.fusion.dim >= 1, "fusion.dim must be >= 1"),
            (self.fusion.depth >= 1, "fusion.depth must be >= 1"),
            (self.fusion.ffn_multiplier >= 1, "fusion.ffn_multiplier must be >= 1"),
            (self.train.batch_size >= 1, "train.batch_size must be >= 1"),
            (self.train.lr >= 0.0, "train.lr must be >= 0"),
            (self.train.weight_decay >= 0.0, "train.weight_decay must be >= 0"),
            (0.0 <= self.train.dropout < 1.0, "train.dropout must be in [0, 1)"),
            (self.train.epochs >= 1, "train.epochs must be >= 1"),
            (self.train.folds >= 2, "train.folds must be >= 2"),
            (self.train.contrastive_temperature > 0.0, "train.contrastive_temperature must be > 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["url"]["dilations"] = list(self.url.dilations)
        payload["url"]["pool_sizes"] = list(self.url.pool_sizes)
        return payload

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @staticmethod
    def from_dict(payload: dict) -> "RunConfig":
        return _build(RunConfig, payload, path="")

    @staticmethod
    def from_yaml(path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from None
        try:
            payload = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"malformed config file {path}: {e}") from None
        if payload is None:
            payload = {}
        if not isinstance(payload, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        return RunConfig.from_dict(payload)

    def with_overrides(self, overrides: list[str]) -> "RunConfig":
        """Apply `section.key=value` strings on top of this configuration."""
        payload = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            target = payload
            parts = key.strip().split(".")
            for part in parts[:-1]:
                if not isinstance(target.get(part), dict):
                    raise ConfigError(f"unknown config section {part!r} in override {item!r}")
                target = target[part]
            if parts[-1] not in target:
                raise ConfigError(f"unknown config key {key!r}")
            target[parts[-1]] = _parse_value(raw)
        return RunConfig.from_dict(payload)


def _parse_value(raw: str):
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        # YAML leaves shorthand exponents like 2e-5 as strings; retry as number.
        try:
            return int(value)
        except ValueError:
            pass
        try:
            return float(value)
        except ValueError:
            pass
    return value


_SECTIONS = {
    "url": UrlConfig,
    "graph": GraphConfig,
    "partition": PartitionConfig,
    "fusion": FusionConfig,
    "train": TrainConfig,
}


def _build(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"config section {path or '<root>'} must be a mapping")
    spec = {f.name: f for f in fields(cls)}
    unknown = set(payload) - set(spec)
    if unknown:
        where = f" in section {path}" if path else ""
        raise ConfigError(f"unknown config key(s){where}: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, f in spec.items():
        if name not in payload:
            continue
        value = payload[name]
        child_path = f"{path}.{name}" if path else name
        if cls is RunConfig and name in _SECTIONS:
            kwargs[name] = _build(_SECTIONS[name], value, child_path)
        else:
            kwargs[name] = _coerce(value, f.type, child_path)
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def _coerce(value, annotation, path: str):
    if annotation is int or annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer, got {value!r}")
        return value
    if annotation is float or annotation == "float":
        if isinstance(value, str):
            # YAML 1.1 reads dotless exponents like 2e-5 as strings; accept
            # them for float fields rather than bouncing the config file.
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{path} must be a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number, got {value!r}")
        return float(value)
    if annotation is bool or annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be a boolean, got {value!r}")
        return value
    if "tuple" in str(annotation):
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{path} must be a list of integers, got {value!r}")
        return tuple(value)
    return value
