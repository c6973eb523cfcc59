"""Repetition statistics over a dataset of texts."""

from __future__ import annotations

import warnings
from typing import Callable, Sequence

from ..errors import EmptyDataset

Tokenizer = Callable[[str], Sequence]


class NoNgramsWarning(UserWarning):
    """Raised as a warning when a dataset yields no n-grams of the requested order."""


def _tokens(item, tokenizer):
    if isinstance(item, str):
        return list(tokenizer(item)) if tokenizer is not None else item.split()
    return list(item)


def ngram_stats(dataset: Sequence, n: int, tokenizer: Tokenizer | None = None) -> tuple[int, int]:
    """``(unique, total)`` n-gram counts, pooled over examples.

    Items are strings (split by ``tokenizer``, whitespace by default) or
    already-tokenised sequences. n-grams never span two examples.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seen = set()
    total = 0
    for item in dataset:
        toks = _tokens(item, tokenizer)
        for i in range(len(toks) - n + 1):
            seen.add(tuple(toks[i:i + n]))
            total += 1
    return len(seen), total


def normalized_ngrams(dataset: Sequence, n: int, tokenizer: Tokenizer | None = None) -> float:
    """Share of duplicated n-grams, ``1 - unique / total``, in [0, 1]."""
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("cannot score an empty dataset")
    unique, total = ngram_stats(dataset, n, tokenizer)
    if total == 0:
        warnings.warn(f"no {n}-grams in the dataset; reporting 0", NoNgramsWarning, stacklevel=2)
        return 0.0
    return 1.0 - unique / total


def diversity_score(dataset: Sequence, tokenizer: Tokenizer | None = None, orders=(2, 3, 4)) -> float:
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("cannot score an empty dataset")
    score = 1.0
    for n in orders:
        score *= 1.0 - normalized_ngrams(dataset, n, tokenizer)
    return score


def distinct_ngrams(dataset: Sequence, n: int, tokenizer: Tokenizer | None = None) -> float:
    """``unique / total``; the complement of :func:`normalized_ngrams`."""
    unique, total = ngram_stats(list(dataset), n, tokenizer)
    return unique / total if total else 0.0
