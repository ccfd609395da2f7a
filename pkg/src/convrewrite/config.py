"""Pipeline configuration: defaults < ``key = value`` file < command-line flags."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .llm import DEFAULT_ENDPOINT, DEFAULT_MODEL


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    topics: str = ""
    topics_format: str = "cast-json"
    manual_rewrites: str = ""
    collection: str = ""
    index: str = ""
    qrels: str = ""
    template: str = "P5"
    answers_in_context: bool = True
    seed: int = 13
    backend: str = "mock"
    mock_fixture: str = ""
    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_output_tokens: int = 256
    timeout: float = 60.0
    endpoint: str = DEFAULT_ENDPOINT
    cache_dir: str = ""
    workers: int = 4
    transcript: bool = False
    ranking_model: str = "dph"
    k_first: int = 1000
    rerank: bool = True
    reranker: str = "overlap"
    reranker_command: str = ""
    precision_cutoffs: str = "1"
    ndcg_cutoffs: str = "3"
    recall_cutoffs: str = "500"
    rel_threshold: int = 1
    gain: str = "linear"
    strict: bool = True
    alpha: float = 0.05
    m: int = 0
    out_dir: str = "artifacts"

    # fields that cannot change any artifact's content
    NON_SEMANTIC = ("out_dir", "cache_dir", "workers", "timeout")

    def validate(self) -> "PipelineConfig":
        choices = {
            "topics_format": ("cast-json", "tsv"),
            "template": ("P1", "P2", "P3", "P4", "P5", "E"),
            "backend": ("mock", "http"),
            "ranking_model": ("dph", "bm25"),
            "reranker": ("overlap", "identity", "external"),
            "gain": ("linear", "exponential"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {', '.join(allowed)}; got {getattr(self, name)!r}")
        for name in ("k_first", "rel_threshold", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.m < 0:
            raise ConfigError("m must be >= 0 (0 means: number of compared systems)")
        for name in ("precision_cutoffs", "ndcg_cutoffs", "recall_cutoffs"):
            self.cutoffs(name)
        if self.reranker == "external" and self.rerank and not self.reranker_command:
            raise ConfigError("reranker = external needs reranker_command")
        return self

    def cutoffs(self, name: str) -> tuple[int, ...]:
        raw = getattr(self, name)
        try:
            values = tuple(int(x) for x in str(raw).replace(",", " ").split())
        except ValueError as exc:
            raise ConfigError(f"{name}: expected integers, got {raw!r}") from exc
        if not values or min(values) < 1:
            raise ConfigError(f"{name}: cutoffs must be positive integers")
        return values

    def semantic_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in self.NON_SEMANTIC}

    @property
    def hash(self) -> str:
        canonical = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def to_text(self) -> str:
        lines = [f"# config hash {self.hash}"]
        lines += [f"{k} = {_format(v)}" for k, v in asdict(self).items()]
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(name: str, raw, kind):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind is bool or kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from exc
    return raw


# relative paths in a config file are taken relative to that file
PATH_FIELDS = ("topics", "manual_rewrites", "collection", "index", "qrels", "mock_fixture",
               "cache_dir")

FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown setting {key!r}")
        values[key] = _coerce(key, value, FIELD_TYPES[key])
    return values


def resolve_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Merge defaults, an optional config file and explicit overrides."""
    values = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        for key, value in parse_config_text(p.read_text(encoding="utf-8"), str(p)).items():
            if key in PATH_FIELDS and value and not Path(value).is_absolute():
                value = str((p.parent / value).resolve())
            values[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown setting {key!r}")
        values[key] = _coerce(key, value, FIELD_TYPES[key])
    return replace(PipelineConfig(), **values).validate()
