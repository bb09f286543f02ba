"""Text-completion backends: remote HTTP, scripted (offline tests), and a
disk-caching wrapper that makes whole experiments replayable byte-for-byte.

Decoding defaults follow the greedy setting used throughout: max_tokens=256,
temperature=0. The cache key is a 256-bit hash of (model, params, prompt), so
a warm cache turns any rerun into zero backend calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass

import httpx

from .cache import DiskCache
from .errors import BackendUnavailable, PromptTooLong, ScriptMiss

logger = logging.getLogger(__name__)

LLM_KEY_ENV = "AUTOCOT_LLM_KEY"

DEFAULT_MAX_TOKENS = 256
DEFAULT_TEMPERATURE = 0.0
# Stop at a hallucinated next demonstration during few-shot inference.
DEFAULT_STOP = ("Q:",)


@dataclass(frozen=True)
class DecodingParams:
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE
    stop: tuple[str, ...] | None = DEFAULT_STOP

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


GREEDY = DecodingParams()


@dataclass(frozen=True)
class CompletionRecord:
    prompt: str
    params: DecodingParams
    model: str
    output: str
    cached: bool


def completion_cache_key(model: str, params: DecodingParams, prompt: str) -> str:
    canonical = json.dumps(
        {
            "model": model,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "stop": list(params.stop) if params.stop else None,
            "prompt": prompt,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def apply_stop(text: str, stop: tuple[str, ...] | None) -> str:
    """Truncate at the earliest stop string, mirroring server-side stop
    handling so scripted and remote backends behave identically."""
    if not stop:
        return text
    cut = len(text)
    for token in stop:
        idx = text.find(token)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


class TokenBucket:
    """Blocking token-bucket rate limiter shared by concurrent backend calls."""

    def __init__(self, rate_per_sec: float, capacity: float | None = None):
        self.rate = rate_per_sec
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_sec)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._stamp) * self.rate
                )
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class ScriptedBackend:
    """Replays an exact prompt -> completion script; never fabricates output.

    Script file: JSON list of {"prompt_sha256": hex, "completion": str}
    entries ("prompt" may be given instead and is hashed at load). An
    unscripted prompt raises ScriptMiss so a drifting pipeline fails loudly.
    """

    def __init__(self, entries: dict[str, str], model: str = "scripted"):
        self._entries = entries
        self.model = model
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path, model: str = "scripted") -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(cls._index_entries(raw), model=model)

    @classmethod
    def from_entries(cls, raw: list[dict], model: str = "scripted") -> "ScriptedBackend":
        return cls(cls._index_entries(raw), model=model)

    @staticmethod
    def _index_entries(raw: list[dict]) -> dict[str, str]:
        entries: dict[str, str] = {}
        for item in raw:
            if "prompt_sha256" in item:
                key = item["prompt_sha256"]
            elif "prompt" in item:
                key = hashlib.sha256(item["prompt"].encode("utf-8")).hexdigest()
            else:
                raise ValueError("script entry needs 'prompt' or 'prompt_sha256'")
            entries[key] = item["completion"]
        return entries

    def complete(self, prompt: str, params: DecodingParams) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        key = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        with self._lock:
            self.calls += 1
        if key not in self._entries:
            raise ScriptMiss(prompt)
        return self._entries[key]


class RemoteBackend:
    """HTTP completion backend.

    POST {"model", "prompt", "max_tokens", "temperature", "stop"} with bearer
    auth from AUTOCOT_LLM_KEY. Retries 3 times with exponential backoff, then
    raises BackendUnavailable.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        client: httpx.Client | None = None,
        max_retries: int = 3,
        backoff: float = 1.0,
        max_prompt_chars: int = 200_000,
        limiter: TokenBucket | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_prompt_chars = max_prompt_chars
        self.limiter = limiter
        self.calls = 0
        self._lock = threading.Lock()
        headers = {}
        key = api_key or os.environ.get(LLM_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(headers=headers, timeout=120.0)

    def complete(self, prompt: str, params: DecodingParams) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if len(prompt) > self.max_prompt_chars:
            raise PromptTooLong(
                f"prompt is {len(prompt)} chars, limit {self.max_prompt_chars}"
            )
        body = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "stop": list(params.stop) if params.stop else None,
        }
        with self._lock:
            self.calls += 1
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if self.limiter is not None:
                self.limiter.acquire()
            try:
                response = self._client.post(self.endpoint, json=body)
                if response.status_code >= 500 or response.status_code == 429:
                    last_error = BackendUnavailable(
                        f"status {response.status_code}"
                    )
                else:
                    response.raise_for_status()
                    data = response.json()
                    return data["choices"][0]["text"]
            except httpx.HTTPError as exc:
                last_error = exc
            except (KeyError, IndexError, json.JSONDecodeError) as exc:
                last_error = BackendUnavailable(f"bad response shape: {exc}")
            if attempt < self.max_retries - 1:
                delay = self.backoff * (2**attempt)
                logger.warning(
                    "completion request failed (attempt %d/%d), retrying in %.1fs",
                    attempt + 1,
                    self.max_retries,
                    delay,
                )
                time.sleep(delay)
        raise BackendUnavailable(f"completion backend failed: {last_error}")


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0


class CachedBackend:
    """Disk-cached wrapper around any completion backend.

    With temperature 0 the same (model, params, prompt) always replays the
    stored output byte-identically — even if a remote backend misbehaves.
    """

    def __init__(self, inner, cache: DiskCache):
        self.inner = inner
        self.cache = cache
        self.model = inner.model
        self.stats = CacheStats()
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        """Calls that actually reached the wrapped backend."""
        return self.inner.calls

    def complete(self, prompt: str, params: DecodingParams) -> str:
        return self.complete_record(prompt, params).output

    def complete_record(self, prompt: str, params: DecodingParams) -> CompletionRecord:
        key = completion_cache_key(self.model, params, prompt)
        hit = self.cache.get(key)
        if hit is not None:
            with self._lock:
                self.stats.hits += 1
            return CompletionRecord(prompt, params, self.model, hit, cached=True)
        output = self.inner.complete(prompt, params)
        self.cache.put(key, output)
        with self._lock:
            self.stats.misses += 1
        return CompletionRecord(prompt, params, self.model, output, cached=False)
