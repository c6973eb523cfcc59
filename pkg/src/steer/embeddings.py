"""Text embeddings for the coherence metrics.

The built-in embedder hashes character n-grams into ``dim`` buckets (blake2b
keyed with the 64-bit ``hash_seed``), weights each bucket by ``log(1 + count)``
and optionally by IDF, then L2-normalises. Every embedder output passes through
:func:`canonical` (rounded to float32, renormalised in float64) so that vectors
read back from the float32 disk cache are bit-identical to fresh ones: the
cache stores the float32 unit vector and both paths expand it the same way.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateEmbedding,
    EmptyCorpus,
    EmptySet,
    EmptyText,
    NonFiniteEmbedding,
    ShapeMismatch,
    ValidationError,
)
from .remote import RemoteBackend

CACHE_MAGIC = b"STEM"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIII")  # magic, version, dim, reserved


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "builtin"
    ngram_range: tuple[int, int] = (1, 3)
    dim: int = 256
    hash_seed: int = 0
    idf: tuple[float, ...] | None = None
    max_batch: int = 64

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise ValidationError(f"unknown embedder kind {self.kind!r}")
        lo, hi = self.ngram_range
        if not 1 <= lo <= hi <= 5:
            raise ValidationError("ngram_range must satisfy 1 <= low <= high <= 5")
        if self.dim < 8:
            raise ValidationError("embedding dimension must be >= 8")
        if self.idf is not None and len(self.idf) != self.dim:
            raise ValidationError("idf table length must equal dim")
        if self.max_batch < 1:
            raise ValidationError("max_batch must be >= 1")

    def fingerprint(self) -> str:
        d = asdict(self)
        d.pop("max_batch")
        if self.idf is not None:
            d["idf"] = hashlib.sha256(np.asarray(self.idf, dtype="<f8").tobytes()).hexdigest()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:32]


def unit_float32(v) -> np.ndarray:
    """``v / |v|`` rounded to float32; the form stored in the cache."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not np.isfinite(n):
        raise NonFiniteEmbedding("embedding contains NaN or inf")
    if n == 0.0:
        raise DegenerateEmbedding("embedding is the zero vector")
    return (v / n).astype(np.float32)


def from_float32(v32) -> np.ndarray:
    v = np.asarray(v32, dtype=np.float32).astype(np.float64)
    return v / np.linalg.norm(v)


def canonical(v) -> np.ndarray:
    """Unit float64 vector determined entirely by its float32 rounding."""
    return from_float32(unit_float32(v))


@lru_cache(maxsize=1 << 18)
def _bucket(gram: str, seed: int, dim: int) -> int:
    h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little") % dim


def ngram_buckets(text: str, config: EmbedderConfig) -> np.ndarray:
    lo, hi = config.ngram_range
    counts = np.zeros(config.dim)
    for n in range(lo, hi + 1):
        for i in range(len(text) - n + 1):
            counts[_bucket(text[i:i + n], config.hash_seed, config.dim)] += 1
    return counts


def embed_builtin(text: str, config: EmbedderConfig = EmbedderConfig()) -> np.ndarray:
    return from_float32(_builtin32(text, config))


def _builtin32(text, config):
    text = text.strip()
    if not text:
        raise EmptyText("cannot embed empty text")
    w = np.log1p(ngram_buckets(text, config))
    if config.idf is not None:
        w = w * np.asarray(config.idf)
    if not w.any():
        raise DegenerateEmbedding(f"no character n-grams in range for {text!r}")
    return unit_float32(w)


def fit_idf(texts: Sequence[str], config: EmbedderConfig) -> tuple[float, ...]:
    """Smoothed IDF per bucket: ``ln((1 + N) / (1 + df)) + 1``."""
    df = np.zeros(config.dim)
    for t in texts:
        df += ngram_buckets(t.strip(), config) > 0
    return tuple(float(x) for x in np.log((1 + len(texts)) / (1 + df)) + 1.0)


class EmbeddingCache:
    """One file per key; 16-byte header then little-endian float32 values."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(text: str, fingerprint: str) -> str:
        return hashlib.sha256(f"{fingerprint}\0{text}".encode("utf-8")).hexdigest()

    def get(self, key: str, dim: int) -> np.ndarray | None:
        try:
            raw = (self.directory / key).read_bytes()
        except FileNotFoundError:
            return None
        if len(raw) != _HEADER.size + 4 * dim:
            return None
        magic, version, stored_dim, _ = _HEADER.unpack_from(raw)
        if magic != CACHE_MAGIC or version != CACHE_VERSION or stored_dim != dim:
            return None
        v32 = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
        if not np.isfinite(v32).all() or not v32.any():
            return None
        return from_float32(v32)

    def put(self, key: str, vector32: np.ndarray) -> None:
        """Store the float32 unit vector (see :func:`unit_float32`)."""
        vector = np.asarray(vector32)
        if vector.dtype != np.float32:
            raise ValidationError("cache entries are float32 unit vectors")
        body = vector.astype("<f4").tobytes()
        blob = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, len(vector), 0) + body
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, self.directory / key)


def embed_external(
    texts: Sequence[str],
    backend: RemoteBackend,
    config: EmbedderConfig,
    cache: EmbeddingCache | None = None,
) -> list[np.ndarray]:
    """Embed one batch through ``POST /embed``; cached texts are not sent."""
    if len(texts) > config.max_batch:
        raise ValidationError(f"batch of {len(texts)} exceeds max_batch={config.max_batch}")
    fp = config.fingerprint()
    out: list[np.ndarray | None] = [None] * len(texts)
    missing = []
    for i, t in enumerate(texts):
        if cache is not None:
            hit = cache.get(EmbeddingCache.key(t, fp), config.dim)
            if hit is not None:
                out[i] = hit
                continue
        missing.append(i)
    if missing:
        reply = backend.post_json("/embed", {"texts": [texts[i] for i in missing]})
        try:
            rows = reply["embeddings"]
        except (KeyError, TypeError) as exc:
            raise ShapeMismatch("malformed /embed response") from exc
        if len(rows) != len(missing):
            raise ShapeMismatch(f"asked for {len(missing)} embeddings, got {len(rows)}")
        for i, row in zip(missing, rows):
            v = np.asarray(row, dtype=np.float64)
            if v.shape != (config.dim,):
                raise ShapeMismatch(f"embedding of shape {v.shape}, expected ({config.dim},)")
            if not np.isfinite(v).all():
                raise NonFiniteEmbedding("backend returned a non-finite embedding")
            v32 = unit_float32(v)
            if cache is not None:
                cache.put(EmbeddingCache.key(texts[i], fp), v32)
            out[i] = from_float32(v32)
    return out


@dataclass
class Embedder:
    """Batch embedding front-end over the built-in or an external embedder."""

    config: EmbedderConfig = field(default_factory=EmbedderConfig)
    cache: EmbeddingCache | None = None
    backend: RemoteBackend | None = None

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if self.config.kind == "external":
            if self.backend is None:
                raise ValidationError("external embedder needs a backend")
            rows = []
            step = self.config.max_batch
            for start in range(0, len(texts), step):
                rows.extend(embed_external(texts[start:start + step], self.backend, self.config, self.cache))
        else:
            rows = [self._builtin(t) for t in texts]
        if not rows:
            return np.zeros((0, self.config.dim))
        return np.vstack(rows)

    def _builtin(self, text):
        if self.cache is None:
            return embed_builtin(text, self.config)
        key = EmbeddingCache.key(text, self.config.fingerprint())
        hit = self.cache.get(key, self.config.dim)
        if hit is not None:
            return hit
        v32 = _builtin32(text, self.config)
        self.cache.put(key, v32)
        return from_float32(v32)


def mean_embedding(vectors) -> np.ndarray:
    """Arithmetic mean of the vectors, deliberately not renormalised."""
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise EmptySet("cannot average an empty set of vectors")
    return v.mean(axis=0)


def cooccurrence_counts(sequences: Sequence[Sequence[int]], vocab_size: int, window: int = 2) -> np.ndarray:
    counts = np.zeros((vocab_size, vocab_size))
    for seq in sequences:
        seq = list(seq)
        for i, a in enumerate(seq):
            for j in range(max(0, i - window), min(len(seq), i + window + 1)):
                if j != i:
                    counts[a, seq[j]] += 1
    return counts


def ppmi(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total == 0:
        return np.zeros_like(counts)
    row = counts.sum(axis=1, keepdims=True)
    col = counts.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * col))
    pmi[~np.isfinite(pmi)] = 0.0
    return np.maximum(pmi, 0.0)


def token_embedding_table(
    sequences: Sequence[Sequence[int]], vocab_size: int, dim: int = 64, window: int = 2
) -> np.ndarray:
    """PPMI co-occurrence (window +-2) factorised by truncated SVD.

    Rows are ``U_d * S_d`` with each singular vector's largest-magnitude entry
    made positive, then L2-normalised. Rows carrying no information map to the
    first unit basis vector.
    """
    sequences = [list(s) for s in sequences]
    if not sequences or not any(sequences):
        raise EmptyCorpus("token embedding table needs a non-empty corpus")
    m = ppmi(cooccurrence_counts(sequences, vocab_size, window))
    u, s, _ = np.linalg.svd(m)
    r = min(dim, len(s))
    u = u[:, :r]
    pivots = np.argmax(np.abs(u), axis=0)
    u = u * np.sign(u[pivots, np.arange(r)])
    table = np.zeros((vocab_size, dim))
    table[:, :r] = u * s[:r]
    norms = np.linalg.norm(table, axis=1)
    dead = norms < 1e-12
    table[~dead] /= norms[~dead, None]
    table[dead] = 0.0
    table[dead, 0] = 1.0
    return table
