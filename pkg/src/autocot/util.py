"""Small shared helpers."""

from __future__ import annotations

import hashlib


def derived_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts; never relies on the
    process-salted builtin hash()."""
    raw = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(raw).digest()[:8], "big")


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
