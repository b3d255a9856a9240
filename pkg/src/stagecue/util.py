"""Shared helpers: stable hashing, seeded RNG construction, whitespace cleanup."""

from __future__ import annotations

import hashlib
import json
import re

import numpy as np

_MASK64 = (1 << 64) - 1

_WS_RUN = re.compile(r"[ \t]+")


def stable_hash64(text: str) -> int:
    """64-bit content hash, stable across processes and platforms."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def make_rng(seed: int) -> np.random.Generator:
    """The one RNG family used for all sampling (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed & _MASK64))

def derive_rng(seed: int, *key_parts: str) -> np.random.Generator:
    """Independent stream keyed by (seed, key parts).

    The stream depends only on the key, not on how many other streams
    were drawn before it, so per-item generation is order-free.
    """
    key = stable_hash64("|".join(key_parts))
    seq = np.random.SeedSequence([seed & _MASK64, key])
    return np.random.Generator(np.random.PCG64(seq))


def config_hash(config: dict) -> str:
    """Short content hash of a JSON-serializable config mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def collapse_ws(text: str) -> str:
    """Squeeze runs of spaces/tabs to a single space and trim the ends."""
    return _WS_RUN.sub(" ", text).strip()


_TOKEN_RUN = re.compile(r"\w+(?:[’']\w+)*")


def tokenize(text: str, mode: str = "unicode_words") -> list[str]:
    """Lowercased word tokens (apostrophes kept inside words), or bare characters."""
    if mode == "unicode_words":
        return _TOKEN_RUN.findall(text.lower())
    if mode == "characters":
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown tokenizer mode: {mode!r}")
