"""HTTP client for the service — used by the CLI's --server mode.

Local inputs (corpus file, scripted backend file, demo file) are inlined into
the request so the server needs no access to the client's filesystem.
"""

from __future__ import annotations

import json
from pathlib import Path

import httpx

from .config import RunConfig
from .errors import BackendUnavailable, ConfigError, DataError


class ServiceClient:
    def __init__(self, base_url: str, client: httpx.Client | None = None):
        self._client = client or httpx.Client(base_url=base_url, timeout=600.0)

    def _corpus_payload(self, cfg: RunConfig) -> dict:
        corpus: dict = {"dataset": cfg.dataset, "answer_format": cfg.answer_format}
        if cfg.data_path:
            records = []
            with open(cfg.data_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        records.append(json.loads(line))
            corpus["records"] = records
        return corpus

    def _backend_payload(self, cfg: RunConfig) -> dict:
        backend: dict = {"model": cfg.model}
        kind, _, rest = cfg.backend.partition(":")
        if kind == "scripted" and rest:
            backend["script"] = json.loads(Path(rest).read_text(encoding="utf-8"))
        else:
            backend["spec"] = cfg.backend
        return backend

    def _options_payload(self, cfg: RunConfig) -> dict:
        return {
            "k": cfg.k,
            "seed": cfg.seed,
            "seeds": list(cfg.seeds),
            "embedder": cfg.embedder,
            "cache_dir": cfg.cache_dir,
            "max_q_tokens": cfg.max_q_tokens,
            "max_steps": cfg.max_steps,
            "sort": cfg.sort,
            "annotated": cfg.annotated,
            "limit": cfg.limit,
        }

    def _post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code == 400:
            raise ConfigError(response.json().get("detail", response.text))
        if response.status_code == 422:
            raise DataError(response.json().get("detail", response.text))
        if response.status_code >= 500:
            raise BackendUnavailable(f"service error {response.status_code}: {response.text[:200]}")
        response.raise_for_status()
        return response.json()

    def construct(self, cfg: RunConfig) -> dict:
        payload = {
            "corpus": self._corpus_payload(cfg),
            "backend": self._backend_payload(cfg),
            "options": self._options_payload(cfg),
            "source": cfg.source,
            "test_id": cfg.test_id,
        }
        if cfg.source == "manual" and cfg.demos_path:
            payload["demos"] = json.loads(Path(cfg.demos_path).read_text())
        return self._post("/construct", payload)

    def evaluate(self, cfg: RunConfig) -> dict:
        payload = {
            "corpus": self._corpus_payload(cfg),
            "backend": self._backend_payload(cfg),
            "options": self._options_payload(cfg),
            "method": cfg.method,
        }
        if cfg.demos_path:
            payload["demos"] = json.loads(Path(cfg.demos_path).read_text())
        return self._post("/eval", payload)

    def analyze(self, cfg: RunConfig) -> dict:
        payload = {
            "corpus": self._corpus_payload(cfg),
            "backend": self._backend_payload(cfg),
            "options": self._options_payload(cfg),
            "clusters": list(cfg.clusters),
        }
        return self._post("/analyze", payload)

    def stream(self, cfg: RunConfig) -> dict:
        payload = {
            "corpus": self._corpus_payload(cfg),
            "backend": self._backend_payload(cfg),
            "options": self._options_payload(cfg),
            "batch_size": cfg.batch_size,
        }
        return self._post("/stream", payload)

    def health(self) -> dict:
        response = self._client.get("/healthz")
        response.raise_for_status()
        return response.json()
