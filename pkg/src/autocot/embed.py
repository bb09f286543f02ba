"""Question embedding behind a pluggable interface.

Two backends: a remote HTTP embedding service, and HashBow — a seeded
hashed bag-of-words embedder that is deterministic and dependency-free,
used for offline tests and fixtures. All corpus vectors are L2-normalized
so Euclidean k-means and cosine retrieval rank identically.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import numpy as np

from .cache import DiskCache
from .corpus import Question
from .errors import BackendUnavailable, ZeroVector

logger = logging.getLogger(__name__)

EMBED_KEY_ENV = "AUTOCOT_EMBED_KEY"


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm, preserving direction. Raises ZeroVector at 0."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def _token_hash(token: str, seed: int) -> int:
    """Seeded 64-bit token hash, stable across processes and platforms."""
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "big")


class HashBowEmbedder:
    """Hashed bag-of-words: each whitespace token lands in `hash % dim` with a
    ±1 sign from the hash's top bit; the bucket sums are L2-normalized.

    Order-invariant by construction and a pure function of (dim, seed, text).
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("text must be non-empty")
        v = np.zeros(self.dim, dtype=np.float64)
        for token in text.split():
            h = _token_hash(token, self.seed)
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            v[h % self.dim] += sign
        return l2_normalize(v)


class RemoteEmbedder:
    """HTTP embedding backend.

    POST {"model": ..., "input": [texts]} -> {"data": [{"embedding": [...]}]}.
    Responses are cached by (model, text) hash; transport failures retry 3
    times with exponential backoff before raising BackendUnavailable.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int | None = None,
        api_key: str | None = None,
        cache: DiskCache | None = None,
        client: httpx.Client | None = None,
        max_retries: int = 3,
        backoff: float = 1.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.cache = cache
        self.max_retries = max_retries
        self.backoff = backoff
        headers = {}
        key = api_key or os.environ.get(EMBED_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(headers=headers, timeout=60.0)

    def _cache_key(self, text: str) -> str:
        raw = f"embed\x00{self.model}\x00{text}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("text must be non-empty")
        if self.cache is not None:
            hit = self.cache.get(self._cache_key(text))
            if hit is not None:
                return _decode_vector(hit)
        vector = self._request(text)
        if self.dim is None:
            self.dim = vector.size
        elif vector.size != self.dim:
            raise BackendUnavailable(
                f"embedding dim changed: expected {self.dim}, got {vector.size}"
            )
        if self.cache is not None:
            self.cache.put(self._cache_key(text), _encode_vector(vector))
        return vector

    def _request(self, text: str) -> np.ndarray:
        body = {"model": self.model, "input": [text]}
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = self._client.post(self.endpoint, json=body)
                if response.status_code >= 500:
                    last_error = BackendUnavailable(
                        f"server error {response.status_code}"
                    )
                else:
                    response.raise_for_status()
                    data = response.json()
                    return np.asarray(
                        data["data"][0]["embedding"], dtype=np.float64
                    )
            except httpx.HTTPError as exc:
                last_error = exc
            if attempt < self.max_retries - 1:
                delay = self.backoff * (2**attempt)
                logger.warning(
                    "embedding request failed (attempt %d/%d), retrying in %.1fs",
                    attempt + 1,
                    self.max_retries,
                    delay,
                )
                time.sleep(delay)
        raise BackendUnavailable(f"embedding backend failed: {last_error}")


def _encode_vector(v: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in v)


def _decode_vector(s: str) -> np.ndarray:
    return np.asarray([float(x) for x in s.split(",")], dtype=np.float64)


def embed_corpus(questions: list[Question], embedder, max_workers: int = 4) -> np.ndarray:
    """Embed every question, returning an (n, dim) matrix aligned with input
    order, each row L2-normalized. Remote fan-out is bounded by max_workers."""
    if not questions:
        raise ValueError("cannot embed an empty corpus")
    texts = [q.text for q in questions]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            vectors = list(pool.map(embedder.embed, texts))
    else:
        vectors = [embedder.embed(t) for t in texts]
    return np.vstack([l2_normalize(v) for v in vectors])
