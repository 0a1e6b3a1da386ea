"""Text embedders.

The default embedder is fully local and deterministic across processes:
seeded feature hashing over word unigrams and character n-grams, projected
into a fixed-dimension unit vector. Tests and benches rely on both the
determinism and the call counter.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter

import httpx
import numpy as np

from .errors import ValidationError

DEFAULT_DIM = 384
_WORD_RE = re.compile(r"[a-z0-9]+")


class Embedder:
    """Embeds text into L2-normalized float32 vectors of a fixed dimension.

    Implementations must be deterministic: the same text yields the same
    vector across calls and process restarts. `calls` counts every text
    embedded (batch calls count each text).
    """

    dimension: int = DEFAULT_DIM

    def __init__(self) -> None:
        self.calls = 0

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        return self._embed(text)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        """Embed texts preserving order; empty text is rejected by index."""
        for i, text in enumerate(texts):
            if not isinstance(text, str) or not text.strip():
                raise ValidationError(f"empty text at index {i}")
        return [self.embed(t) for t in texts]

    def _embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class HashedNgramEmbedder(Embedder):
    """Feature-hashing embedder: word unigrams + char n-grams of each word.

    blake2b is keyed with the seed so vectors are stable across interpreter
    restarts regardless of PYTHONHASHSEED.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0x5EED, ngram_sizes: tuple[int, ...] = (3, 5)):
        super().__init__()
        if dim <= 0:
            raise ValidationError(f"embedding dimension must be positive, got {dim}")
        self.dimension = dim
        self._key = seed.to_bytes(8, "little")
        self._ngram_sizes = ngram_sizes

    def _features(self, text: str) -> Counter:
        words = _WORD_RE.findall(text.lower())
        if not words:
            # Whitespace-trimmed raw text as the single feature keeps
            # punctuation-only input embeddable and deterministic.
            return Counter({text.strip(): 1})
        feats = Counter(words)
        for word in words:
            bounded = f"<{word}>"
            for n in self._ngram_sizes:
                for i in range(len(bounded) - n + 1):
                    feats[bounded[i : i + n]] += 1
        return feats

    def _embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for feat, count in self._features(text).items():
            digest = hashlib.blake2b(feat.encode("utf-8"), digest_size=8, key=self._key).digest()
            index = int.from_bytes(digest[:4], "little") % self.dimension
            vec[index] += count if digest[4] & 1 else -count
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        else:
            vec[0] = 1.0
        return vec.astype(np.float32)


class HttpEmbedder(Embedder):
    """Remote embedding service speaking a minimal JSON contract.

    POST {url} with {"texts": [...]} returns {"vectors": [[...], ...]}.
    Satisfies the same interface as the local embedder for production use.
    """

    def __init__(self, url: str, dim: int = DEFAULT_DIM, timeout: float = 30.0):
        super().__init__()
        self.dimension = dim
        self._url = url
        self._timeout = timeout

    def _embed(self, text: str) -> np.ndarray:
        resp = httpx.post(self._url, json={"texts": [text]}, timeout=self._timeout)
        resp.raise_for_status()
        vec = np.asarray(resp.json()["vectors"][0], dtype=np.float32)
        if vec.shape != (self.dimension,):
            raise ValueError(f"remote embedder returned shape {vec.shape}, expected ({self.dimension},)")
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec
