"""Run configuration: YAML file, strict schema, defaults.

Unknown keys fail loudly with their dotted path instead of being ignored,
since a silently dropped `tau_d` would change results without a trace.
The API key never lives in the file; it comes from the environment.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import yaml

from .errors import ConfigError
from .retrieval import PRESETS, RetrievalConfig

logger = logging.getLogger(__name__)


@dataclass
class ApiConfig:
    base_url: str = "http://localhost:8000/v1"
    chat_model: str = ""
    embed_model: str = "BAAI/bge-large-en-v1.5"
    timeout: float = 60.0
    max_retries: int = 2
    max_inflight: int = 8


@dataclass
class IndexConfig:
    chunk_size: int = 500
    overlap: int = 200
    max_workers: int = 4


@dataclass
class BaselineIndexConfig:
    chunk_size: int = 500
    overlap: int = 100


@dataclass
class PipelineConfig:
    max_steps: int = 3


@dataclass
class EvalConfig:
    sample_size: int = 100
    seed: int = 17


@dataclass
class RunConfig:
    api: ApiConfig = field(default_factory=ApiConfig)
    index: IndexConfig = field(default_factory=IndexConfig)
    baseline_index: BaselineIndexConfig = field(default_factory=BaselineIndexConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_yaml(self) -> str:
        data = {
            "api": asdict(self.api),
            "index": asdict(self.index),
            "baseline_index": asdict(self.baseline_index),
            "retrieval": asdict(self.retrieval),
            "pipeline": asdict(self.pipeline),
            "eval": asdict(self.eval),
        }
        return yaml.safe_dump(data, sort_keys=True)


_SCHEMA = {
    "api": ApiConfig,
    "index": IndexConfig,
    "baseline_index": BaselineIndexConfig,
    "retrieval": RetrievalConfig,
    "pipeline": PipelineConfig,
    "eval": EvalConfig,
}

def _coerce_field(value, annotation: type, path: str):
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type")


def _build_section(cls: type, raw: dict, path: str):
    fields = {f: t for f, t in cls.__dataclass_fields__.items()}
    kwargs = {}
    for key, value in raw.items():
        if key == "preset" and cls is RetrievalConfig:
            continue
        if key not in fields:
            raise ConfigError(f"{path}.{key}: unknown key")
        annotation = type(getattr(cls(), key))
        kwargs[key] = _coerce_field(value, annotation, f"{path}.{key}")
    if cls is RetrievalConfig:
        preset = raw.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(
                    f"{path}.preset: unknown preset {preset!r}; expected one of {sorted(PRESETS)}"
                )
            merged = dict(PRESETS[preset])
            merged.update(kwargs)
            kwargs = merged
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(raw: dict | None) -> RunConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("top level of the config must be a mapping")
    sections = {}
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"{key}: unknown section")
        if value is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a mapping")
        sections[key] = _build_section(_SCHEMA[key], value, key)
    return RunConfig(**sections)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return config_from_dict(raw)
