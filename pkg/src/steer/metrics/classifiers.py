"""Logistic-regression probes: adversarial real-vs-synthetic AUROC and the
downstream accuracy of a classifier trained on synthetic data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyHoldout, LengthMismatch, SingleClassTraining, TooFewSamples
from .coherence import canonical_order

LEARNING_RATE = 0.1
EPOCHS = 500
L2 = 1e-3


def rank_auroc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties 1/2).

    Computed by counting, for each positive, the negatives strictly below and
    those at or below it; the sum of the two counts is twice the concordance
    total with ties counted once, so the result is exact for integer inputs.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise LengthMismatch("scores and labels differ in length")
    pos = s[y == 1]
    neg = np.sort(s[y != 1])
    if pos.size == 0 or neg.size == 0:
        raise TooFewSamples("AUROC needs both classes")
    below = np.searchsorted(neg, pos, side="left")
    at_or_below = np.searchsorted(neg, pos, side="right")
    twice = int(below.sum()) + int(at_or_below.sum())
    return twice / (2 * pos.size * neg.size)


@dataclass
class LogisticRegression:
    """Multinomial logistic regression fit by full-batch gradient descent.

    Features are standardised with the training mean and standard deviation.
    Weights start at zero, so the fit is deterministic.
    """

    learning_rate: float = LEARNING_RATE
    epochs: int = EPOCHS
    l2: float = L2

    def fit(self, X, y, n_classes: int | None = None) -> "LogisticRegression":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.intp)
        k = int(n_classes if n_classes is not None else y.max() + 1)
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        Z = (X - self.mean_) / self.scale_
        n, d = Z.shape
        Y = np.zeros((n, k))
        Y[np.arange(n), y] = 1.0
        W = np.zeros((d, k))
        b = np.zeros(k)
        for _ in range(self.epochs):
            P = _softmax_rows(Z @ W + b)
            G = (P - Y) / n
            W -= self.learning_rate * (Z.T @ G + self.l2 * W)
            b -= self.learning_rate * G.sum(axis=0)
        self.coef_, self.intercept_ = W, b
        return self

    def predict_proba(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_
        return _softmax_rows(Z @ self.coef_ + self.intercept_)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def _softmax_rows(A):
    A = A - A.max(axis=1, keepdims=True)
    E = np.exp(A)
    return E / E.sum(axis=1, keepdims=True)


def stratified_folds(n_per_class, folds: int, seed: int) -> list[np.ndarray]:
    """Fold index of every item, per class.

    Each class (already in canonical order) is permuted by a generator seeded
    with ``seed``, then dealt round-robin into ``folds`` folds. Classes of equal
    size therefore get identical fold assignments.
    """
    out = []
    for n in n_per_class:
        perm = np.random.default_rng(seed).permutation(n)
        f = np.empty(n, dtype=np.intp)
        f[perm] = np.arange(n) % folds
        out.append(f)
    return out


def adversarial_auroc(real, synth, folds: int = 5, seed: int = 0) -> float:
    """Mean held-out AUROC of a classifier separating synthetic (positive) from real."""
    r = np.asarray(real, dtype=np.float64)
    s = np.asarray(synth, dtype=np.float64)
    if r.ndim != 2 or s.ndim != 2 or min(r.shape[0], s.shape[0]) < folds:
        raise TooFewSamples(f"each class needs at least {folds} samples")
    r = canonical_order(r)
    s = canonical_order(s)
    fr, fs = stratified_folds([r.shape[0], s.shape[0]], folds, seed)
    X = np.vstack([r, s])
    y = np.concatenate([np.zeros(r.shape[0], dtype=np.intp), np.ones(s.shape[0], dtype=np.intp)])
    f = np.concatenate([fr, fs])
    scores = []
    for k in range(folds):
        test = f == k
        clf = LogisticRegression().fit(X[~test], y[~test], 2)
        scores.append(rank_auroc(clf.predict_proba(X[test])[:, 1], y[test]))
    return float(np.mean(scores))


def downstream_accuracy(train_X, train_labels, test_X, test_labels) -> float:
    """Accuracy on the holdout of a classifier fit on the training embeddings."""
    train_labels = list(train_labels)
    test_labels = list(test_labels)
    if len(test_labels) == 0:
        raise EmptyHoldout("holdout set is empty")
    classes = sorted(set(train_labels))
    if len(classes) < 2:
        raise SingleClassTraining("training data contains a single class")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[c] for c in train_labels], dtype=np.intp)
    clf = LogisticRegression().fit(train_X, y, len(classes))
    pred = clf.predict(test_X)
    truth = np.array([index.get(c, -1) for c in test_labels])
    return float((pred == truth).mean())
