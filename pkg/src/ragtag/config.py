"""Pipeline configuration: one versioned, human-editable YAML file.

Every tunable the pipeline exposes lives here under a fixed schema; unknown
keys are rejected so typos fail loudly, and every validation error names
the offending field path. Secrets never appear in the file — the remote
client reads its auth token from the environment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

CONFIG_VERSION = 1

_KNOWN_EMBEDDER_IDS = ("trigram-fnv1a",)
_KNOWN_CLIENT_KINDS = ("stub", "remote")


class ConfigInvalidError(ValueError):
    """A configuration value is missing, mistyped, or out of range."""


def _require_int(path: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigInvalidError(f"{path}: expected an integer, got {value!r}")
    return value


def _require_float(path: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalidError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _require_str(path: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ConfigInvalidError(f"{path}: expected a string, got {value!r}")
    return value


@dataclass(frozen=True)
class EmbedderConfig:
    id: str = "trigram-fnv1a"
    seed: int = 0
    dimension: int = 64

    def __post_init__(self):
        _require_str("embedder.id", self.id)
        _require_int("embedder.seed", self.seed)
        _require_int("embedder.dimension", self.dimension)
        if self.id not in _KNOWN_EMBEDDER_IDS:
            raise ConfigInvalidError(
                f"embedder.id: unknown embedder family {self.id!r}"
            )
        if self.dimension < 8:
            raise ConfigInvalidError(
                f"embedder.dimension: must be at least 8, got {self.dimension}"
            )


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 4
    score_floor: float = 0.15

    def __post_init__(self):
        _require_int("retrieval.k", self.k)
        object.__setattr__(
            self, "score_floor", _require_float("retrieval.score_floor", self.score_floor)
        )
        if self.k < 1:
            raise ConfigInvalidError(f"retrieval.k: must be at least 1, got {self.k}")
        if not -1.0 <= self.score_floor <= 1.0:
            raise ConfigInvalidError(
                f"retrieval.score_floor: must lie in [-1, 1], got {self.score_floor}"
            )


@dataclass(frozen=True)
class PromptConfig:
    budget: int = 512

    def __post_init__(self):
        _require_int("prompt.budget", self.budget)
        if self.budget < 64:
            raise ConfigInvalidError(
                f"prompt.budget: must be at least 64 bytes, got {self.budget}"
            )


@dataclass(frozen=True)
class LossWeightsConfig:
    gen: float = 1.0
    contrast: float = 0.1
    tag: float = 0.5

    def __post_init__(self):
        for name in ("gen", "contrast", "tag"):
            value = _require_float(f"loss_weights.{name}", getattr(self, name))
            object.__setattr__(self, name, value)
            if value < 0:
                raise ConfigInvalidError(
                    f"loss_weights.{name}: must be non-negative, got {value}"
                )
        if self.gen == 0 and self.contrast == 0 and self.tag == 0:
            raise ConfigInvalidError(
                "loss_weights: at least one weight must be positive"
            )


@dataclass(frozen=True)
class ClientConfig:
    kind: str = "stub"
    endpoint: str = ""
    timeout: float = 30.0

    def __post_init__(self):
        _require_str("client.kind", self.kind)
        _require_str("client.endpoint", self.endpoint)
        object.__setattr__(self, "timeout", _require_float("client.timeout", self.timeout))
        if self.kind not in _KNOWN_CLIENT_KINDS:
            raise ConfigInvalidError(
                f"client.kind: expected one of {_KNOWN_CLIENT_KINDS}, got {self.kind!r}"
            )
        if self.kind == "remote" and not self.endpoint:
            raise ConfigInvalidError(
                "client.endpoint: required when client.kind is 'remote'"
            )
        if self.timeout <= 0:
            raise ConfigInvalidError(
                f"client.timeout: must be positive, got {self.timeout}"
            )


@dataclass(frozen=True)
class PathsConfig:
    store: str = ""
    cache: str = ""
    corpus: str = ""

    def __post_init__(self):
        for name in ("store", "cache", "corpus"):
            _require_str(f"paths.{name}", getattr(self, name))


@dataclass(frozen=True)
class PipelineConfig:
    config_version: int = CONFIG_VERSION
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    loss_weights: LossWeightsConfig = field(default_factory=LossWeightsConfig)
    client: ClientConfig = field(default_factory=ClientConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        _require_int("config_version", self.config_version)
        if self.config_version != CONFIG_VERSION:
            raise ConfigInvalidError(
                f"config_version: expected {CONFIG_VERSION}, got {self.config_version}"
            )


DEFAULT_CONFIG = PipelineConfig()

_SECTIONS = {
    "embedder": EmbedderConfig,
    "retrieval": RetrievalConfig,
    "prompt": PromptConfig,
    "loss_weights": LossWeightsConfig,
    "client": ClientConfig,
    "paths": PathsConfig,
}


def _build_section(name: str, cls, raw: Any):
    if raw is None:
        return cls()
    if not isinstance(raw, Mapping):
        raise ConfigInvalidError(f"{name}: expected a mapping of settings")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigInvalidError(f"{name}.{key}: unknown key")
    return cls(**dict(raw))


def parse_config(data: Mapping[str, Any] | None) -> PipelineConfig:
    """Validate a parsed mapping into a :class:`PipelineConfig`."""
    if data is None:
        return DEFAULT_CONFIG
    if not isinstance(data, Mapping):
        raise ConfigInvalidError("config root: expected a mapping")
    for key in data:
        if key != "config_version" and key not in _SECTIONS:
            raise ConfigInvalidError(f"{key}: unknown section")
    if "config_version" not in data:
        raise ConfigInvalidError("config_version: required")
    sections = {
        name: _build_section(name, cls, data.get(name)) for name, cls in _SECTIONS.items()
    }
    return PipelineConfig(
        config_version=_require_int("config_version", data["config_version"]),
        **sections,
    )


def load_config(path: str | Path) -> PipelineConfig:
    """Load and validate a YAML configuration file.

    An empty file yields the defaults; a non-empty file must carry
    ``config_version``.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalidError(f"config file is not valid YAML: {exc}") from exc
    return parse_config(data)
