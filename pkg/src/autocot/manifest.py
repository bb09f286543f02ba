"""Run manifests: enough identity (config hash, seeds, output hashes, cache
counters) to prove that a replay against a warm cache reproduced a run
bit-exactly with zero backend calls."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .llm import CachedBackend


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seeds: list[int]
    cache: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def cache_stats(backend) -> dict:
    """Hit/miss/backend-call counters for any backend; zeros when uncached."""
    if isinstance(backend, CachedBackend):
        return {
            "hits": backend.stats.hits,
            "misses": backend.stats.misses,
            "backend_calls": backend.calls,
        }
    return {"hits": 0, "misses": 0, "backend_calls": getattr(backend, "calls", 0)}
