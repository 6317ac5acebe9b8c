"""Text embedding providers.

The reference provider hashes lowercase alphanumeric tokens into a fixed
number of buckets and L2-normalizes the counts.  It is deterministic across
processes (blake2b, not Python's salted ``hash``).  Any object with
``provider_id``, ``dim`` and ``embed`` can stand in for it.
"""

from __future__ import annotations

import hashlib
import re
from typing import Iterable, Protocol

import numpy as np

_TOKEN = re.compile(r"[^0-9a-z]+")


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.split(text.lower()) if t]


class HashingEmbedder:
    def __init__(self, dim: int = 256):
        self.dim = dim
        self.provider_id = f"token-hash-blake2b-{dim}"
        self._bucket_cache: dict[str, int] = {}

    def bucket(self, token: str) -> int:
        b = self._bucket_cache.get(token)
        if b is None:
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            b = int.from_bytes(digest, "little") % self.dim
            self._bucket_cache[token] = b
        return b

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("cannot embed empty text")
        v = np.zeros(self.dim)
        for t in tokens:
            v[self.bucket(t)] += 1.0
        return v / np.linalg.norm(v)

    def embed_many(self, texts: Iterable[str]) -> np.ndarray:
        rows = [self.embed(t) for t in texts]
        if not rows:
            return np.zeros((0, self.dim))
        return np.vstack(rows)


def embed_many(provider: EmbeddingProvider, texts: Iterable[str]) -> np.ndarray:
    batch = getattr(provider, "embed_many", None)
    if batch is not None:
        return batch(texts)
    rows = [provider.embed(t) for t in texts]
    return np.vstack(rows) if rows else np.zeros((0, provider.dim))


DEFAULT_EMBEDDER = HashingEmbedder()
