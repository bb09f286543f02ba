"""Run configuration: serializable settings plus backend/embedder spec parsing.

Spec strings:
    --backend  scripted:<file> | remote:<endpoint>
    --embedder hashbow:<dim>:<seed> | remote:<endpoint>[:<model>]
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum

from .cache import DiskCache
from .corpus import AnswerFormat, BUILTIN_DATASETS, DatasetSpec
from .embed import HashBowEmbedder, RemoteEmbedder
from .errors import ConfigError
from .llm import CachedBackend, RemoteBackend, ScriptedBackend
from .util import sha256_text


class Method(str, Enum):
    ZERO_SHOT = "zero-shot"
    ZERO_SHOT_COT = "zero-shot-cot"
    FEW_SHOT = "few-shot"
    MANUAL_COT = "manual-cot"
    AUTO_COT = "auto-cot"
    RETRIEVAL_Q_COT = "retrieval-q-cot"
    RANDOM_Q_COT = "random-q-cot"
    IN_CLUSTER = "in-cluster"


@dataclass
class RunConfig:
    """Everything needed to reproduce a run bit-exactly against a warm cache."""

    dataset: str = "custom"
    data_path: str | None = None
    answer_format: str | None = None  # overrides the dataset registry
    method: str = Method.AUTO_COT.value
    k: int | None = None
    seed: int = 42
    seeds: tuple[int, ...] = ()
    backend: str = ""
    embedder: str = "hashbow:256:0"
    model: str = "default"
    cache_dir: str | None = None
    max_q_tokens: int = 60
    max_steps: int = 5
    source: str = "auto"
    sort: str = "min-dist"
    annotated: bool = False
    demos_path: str | None = None
    test_id: str | None = None
    batch_size: int = 30
    clusters: tuple[int, ...] = ()
    limit: int | None = None

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["seeds"] = list(self.seeds)
        raw["clusters"] = list(self.clusters)
        return raw

    def config_hash(self) -> str:
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True))


def resolve_dataset_spec(cfg: RunConfig) -> DatasetSpec:
    if cfg.dataset in BUILTIN_DATASETS:
        base = BUILTIN_DATASETS[cfg.dataset]
        fmt = AnswerFormat(cfg.answer_format) if cfg.answer_format else base.answer_format
        return DatasetSpec(base.name, fmt, cfg.k or base.default_k, cfg.data_path)
    if not cfg.answer_format:
        raise ConfigError(
            f"unknown dataset {cfg.dataset!r}: pass --format for custom corpora"
        )
    return DatasetSpec(
        cfg.dataset, AnswerFormat(cfg.answer_format), cfg.k or 8, cfg.data_path
    )


def build_backend(cfg: RunConfig, script_entries: list[dict] | None = None):
    """Instantiate the completion backend named by cfg.backend, wrapped in a
    disk cache when cfg.cache_dir is set. Inline script entries override a
    scripted file path (used by the service's inline mode)."""
    if script_entries is not None:
        backend = ScriptedBackend.from_entries(script_entries, model=cfg.model)
    else:
        spec = cfg.backend
        if not spec:
            raise ConfigError("no backend configured (--backend)")
        kind, _, rest = spec.partition(":")
        if kind == "scripted":
            if not rest:
                raise ConfigError("scripted backend needs a file: scripted:<file>")
            try:
                backend = ScriptedBackend.from_file(rest, model=cfg.model)
            except FileNotFoundError:
                raise ConfigError(f"script file not found: {rest}") from None
        elif kind == "remote":
            if not rest:
                raise ConfigError("remote backend needs an endpoint: remote:<url>")
            backend = RemoteBackend(rest, model=cfg.model)
        else:
            raise ConfigError(f"unknown backend spec {spec!r}")
    if cfg.cache_dir:
        return CachedBackend(backend, DiskCache(cfg.cache_dir))
    return backend


def build_embedder(cfg: RunConfig):
    spec = cfg.embedder
    kind, _, rest = spec.partition(":")
    if kind == "hashbow":
        parts = rest.split(":") if rest else []
        try:
            dim = int(parts[0]) if len(parts) > 0 and parts[0] else 256
            seed = int(parts[1]) if len(parts) > 1 else 0
        except ValueError:
            raise ConfigError(f"bad hashbow spec {spec!r}") from None
        return HashBowEmbedder(dim=dim, seed=seed)
    if kind == "remote":
        if not rest:
            raise ConfigError("remote embedder needs an endpoint: remote:<url>")
        cache = DiskCache(cfg.cache_dir) if cfg.cache_dir else None
        return RemoteEmbedder(rest, "default", cache=cache)
    raise ConfigError(f"unknown embedder spec {spec!r}")
