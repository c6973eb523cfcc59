"""Convex-hull precision and recall in a low-dimensional projection.

A point is a member of ``conv(X)`` when the minimum distance from it to the
hull, found by fully-corrective Frank-Wolfe over the simplex of weights, is
at most ``tau``. The default ``tau`` is ``1e-6`` times the diameter of the
pooled point set.
"""

from __future__ import annotations

import numpy as np

from .._backend import kernels
from ..errors import TooFewPoints
from .coherence import canonical_order

MAX_ITER = 2000
GAP_TOL = 1e-10
HULL_DIM = 5
TAU_SCALE = 1e-6


def pca_project(X, d: int) -> np.ndarray:
    """Project onto the top ``d`` principal axes; sign fixed per axis.

    Each axis is flipped so that its largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    centred = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    axes = vt[:d]
    pivots = np.argmax(np.abs(axes), axis=1)
    axes = axes * np.sign(axes[np.arange(axes.shape[0]), pivots])[:, None]
    out = centred @ axes.T
    if out.shape[1] < d:
        out = np.hstack([out, np.zeros((out.shape[0], d - out.shape[1]))])
    return out


def diameter(X) -> float:
    """Largest pairwise Euclidean distance (chunked, O(n^2) time)."""
    X = np.asarray(X, dtype=np.float64)
    best = 0.0
    sq = (X * X).sum(axis=1)
    for start in range(0, X.shape[0], 512):
        blk = X[start:start + 512]
        d2 = sq[start:start + 512, None] + sq[None, :] - 2.0 * blk @ X.T
        best = max(best, float(d2.max()))
    return float(np.sqrt(max(best, 0.0)))


def hull_membership(points, queries, tau: float, max_iter: int = MAX_ITER,
                    gap_tol: float = GAP_TOL, prefilter: bool = True) -> np.ndarray:
    """Boolean membership of every query in ``conv(points)``.

    With ``prefilter`` on, queries farther than ``tau`` outside the bounding box
    of ``points`` are rejected without running the solver.
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    Q = np.ascontiguousarray(queries, dtype=np.float64)
    inside = np.ones(Q.shape[0], dtype=bool)
    if prefilter:
        lo = X.min(axis=0) - tau
        hi = X.max(axis=0) + tau
        inside = ((Q >= lo) & (Q <= hi)).all(axis=1)
    out = np.zeros(Q.shape[0], dtype=bool)
    if inside.any():
        res, _ = kernels.hull_residuals(X, np.ascontiguousarray(Q[inside]), tau, max_iter, gap_tol)
        out[inside] = res <= tau
    return out


def hull_precision_recall(real, synth, d_h: int = HULL_DIM, tau: float | None = None,
                          prefilter: bool = True) -> tuple[float, float]:
    """``(precision, recall)``: synthetic points inside the real hull, and vice versa.

    Both sets are projected by PCA fitted on the pooled points when their
    dimension exceeds ``d_h``.
    """
    R = np.asarray(real, dtype=np.float64)
    S = np.asarray(synth, dtype=np.float64)
    if R.ndim != 2 or S.ndim != 2 or R.shape[0] < 2 or S.shape[0] < 2:
        raise TooFewPoints("each point set needs at least two points")
    R = canonical_order(R)
    S = canonical_order(S)
    pooled = np.vstack([R, S])
    if pooled.shape[1] > d_h:
        pooled = pca_project(pooled, d_h)
    Rp, Sp = pooled[:R.shape[0]], pooled[R.shape[0]:]
    if tau is None:
        tau = TAU_SCALE * diameter(pooled)
    precision = float(hull_membership(Rp, Sp, tau, prefilter=prefilter).mean())
    recall = float(hull_membership(Sp, Rp, tau, prefilter=prefilter).mean())
    return precision, recall


def f_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
