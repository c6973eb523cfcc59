"""Embedding-space closeness of two datasets: mean-vector cosine and a
quantised Jensen-Shannon score over shared k-means bins."""

from __future__ import annotations

import numpy as np

from .._backend import kernels
from ..errors import EmptySet, LengthMismatch, TooFewPoints, ZeroMeanVector


def canonical_order(X: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically (first column most significant).

    Metrics sort their inputs this way so that results do not depend on the
    order in which examples arrive.
    """
    return X[np.lexsort(X.T[::-1])] if X.shape[0] > 1 else X


def _as_set(x, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0:
        raise EmptySet(f"{name} embedding set is empty")
    return canonical_order(a)


def dataset_cosine_similarity(real, synth) -> float:
    r = _as_set(real, "real").mean(axis=0)
    s = _as_set(synth, "synthetic").mean(axis=0)
    if r.shape != s.shape:
        raise LengthMismatch(f"embedding dimensions differ: {r.shape[0]} vs {s.shape[0]}")
    nr = np.linalg.norm(r)
    ns = np.linalg.norm(s)
    if nr == 0.0 or ns == 0.0:
        raise ZeroMeanVector("a mean embedding is the zero vector")
    return float(np.clip(r @ s / (nr * ns), -1.0, 1.0))


def default_k(n: int, m: int) -> int:
    return max(2, min(50, (n + m) // 20))


def kmeans_pp_init(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means++ seeding with ``numpy.random.default_rng(seed)``."""
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    centres = [int(rng.integers(n))]
    d2 = ((X - X[centres[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # every point coincides with a centre; pick the lowest unused index
            used = set(centres)
            nxt = next(i for i in range(n) if i not in used)
        else:
            nxt = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        centres.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[centres].copy()


def kmeans(X, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-8):
    """Returns ``(centroids, labels, iterations)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if not 2 <= k <= X.shape[0]:
        raise TooFewPoints(f"k={k} needs 2 <= k <= {X.shape[0]} points")
    return kernels.lloyd(X, kmeans_pp_init(X, k, seed), max_iter, tol)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits; 0 for identical inputs, at most 1."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mid = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float((a[nz] * np.log2(a[nz] / mid[nz])).sum())

    return min(1.0, max(0.0, 0.5 * kl(p) + 0.5 * kl(q)))


def smoothed_histogram(labels, k: int, eps: float) -> np.ndarray:
    h = np.bincount(labels, minlength=k).astype(np.float64)
    h /= h.sum()
    h += eps
    return h / h.sum()


def quantized_divergence(real, synth, k: int | None = None, eps: float = 1e-6, seed: int = 0,
                         max_iter: int = 300, tol: float = 1e-8) -> float:
    """``1 - JS(p, q)`` between bin histograms of the two sets.

    The bins come from k-means on the pooled embeddings.
    """
    r = _as_set(real, "real")
    s = _as_set(synth, "synthetic")
    n, m = r.shape[0], s.shape[0]
    if k is None:
        k = default_k(n, m)
    if n + m < k or k < 2:
        raise TooFewPoints(f"k={k} bins need at least {max(k, 2)} pooled points, got {n + m}")
    _, labels, _ = kmeans(np.vstack([r, s]), k, seed, max_iter, tol)
    p = smoothed_histogram(labels[:n], k, eps)
    q = smoothed_histogram(labels[n:], k, eps)
    return 1.0 - js_divergence(p, q)
