"""Pluggable sentence embedding with a deterministic dependency-free fallback.

The fallback embeds a sentence as a case-folded token bag feature-hashed into
768 signed bins and L2-normalized. Hashing uses md5 so vectors are stable
across processes and platforms. Empty text maps to the designated unknown
vector (the embedding of the pseudo-token "[unk]").
"""
from __future__ import annotations

import hashlib
import re
from typing import Protocol

import numpy as np

TEXT_DIM = 768

_TOKEN_RE = re.compile(r"[\w']+", re.UNICODE)


class TextEmbedderProvider(Protocol):
    dim: int

    def embed(self, sentence: str) -> np.ndarray: ...


class HashedTextEmbedder:
    """Feature-hashed bag-of-tokens sentence embedding."""

    name = "hashed-bag-v1"
    dim = TEXT_DIM

    def __init__(self):
        self._cache: dict[str, np.ndarray] = {}
        self._unknown = self._embed_tokens(["[unk]"])

    @property
    def unknown_vector(self) -> np.ndarray:
        return self._unknown.copy()

    def embed(self, sentence: str | None) -> np.ndarray:
        if not sentence:
            return self._unknown.copy()
        cached = self._cache.get(sentence)
        if cached is None:
            tokens = _TOKEN_RE.findall(sentence.casefold())
            cached = self._embed_tokens(tokens) if tokens else self._unknown
            self._cache[sentence] = cached
        return cached.copy()

    @staticmethod
    def _embed_tokens(tokens: list[str]) -> np.ndarray:
        vec = np.zeros(TEXT_DIM, dtype=np.float64)
        for token in tokens:
            digest = hashlib.md5(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "little") % TEXT_DIM
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec
