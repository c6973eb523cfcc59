"""Language-model interface and the built-in cache-augmented n-gram model.

The next-token distribution of :class:`CacheNGramModel` is

    P(w | ctx) = (1 - lam) * P_ngram(w | h) + lam * P_cache(w | ctx)

where ``h`` is the last ``order - 1`` tokens of the context (left-padded with
BOS), ``P_ngram`` interpolates add-alpha estimates of every order from
``order`` down to 1, and ``P_cache`` is the recency-weighted frequency of
non-reserved tokens in the whole context (weight ``decay ** age``).

With ``backoff`` on (the default), orders whose history never occurred in
training are left out and the remaining interpolation weights are rescaled to
sum to one. An unseen history would otherwise contribute a uniform
distribution. The unigram order always has a history (the empty one), so a
trained model never falls back to uniform entirely.
"""

from __future__ import annotations

import gzip
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from ._io import atomic_write_bytes
from .errors import (
    ContextOverflow,
    EmptyCorpus,
    FormatVersionMismatch,
    InvalidTokenId,
    ModelFileError,
    SteerIOError,
    ValidationError,
    VocabularyMismatch,
)
from .vocab import BOS, EOS, UNK, Vocabulary, tokenize

FORMAT_NAME = "steer-lm"
FORMAT_VERSION = 1
MODEL_SUFFIX = ".steer-lm.json"
DEFAULT_CONTEXT_SIZE = 2048


class LanguageModel(Protocol):
    """Anything that maps a token context to next-token log-probabilities."""

    vocab: Vocabulary
    context_size: int

    def log_probs(self, context: Sequence[int]) -> np.ndarray: ...


def instruction_text(instruction: str, label: str | None = None) -> str:
    """Conditioning prompt for one example; labels become a ``Label: x`` line."""
    if label is None:
        return instruction
    return f"{instruction}Label: {label}\n"


@dataclass
class CacheNGramModel:
    vocab: Vocabulary
    order: int = 5
    alpha: float = 0.1
    cache_weight: float = 0.3
    cache_decay: float = 0.99
    context_size: int = DEFAULT_CONTEXT_SIZE
    interpolation: tuple[float, ...] | None = None
    backoff: bool = True
    # counts[k - 1] maps a context tuple of length k - 1 to {token: count}
    counts: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValidationError("order must be >= 1")
        if not self.alpha > 0:
            raise ValidationError("smoothing alpha must be > 0")
        if not 0.0 <= self.cache_weight <= 1.0:
            raise ValidationError("cache_weight must lie in [0, 1]")
        if not 0.0 < self.cache_decay <= 1.0:
            raise ValidationError("cache_decay must lie in (0, 1]")
        if self.context_size < 1:
            raise ValidationError("context_size must be positive")
        if self.interpolation is None:
            self.interpolation = tuple([1.0 / self.order] * self.order)
        w = tuple(float(x) for x in self.interpolation)
        if len(w) != self.order or min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
            raise ValidationError("interpolation needs `order` non-negative weights summing to 1")
        self.interpolation = w
        if not self.counts:
            self.counts = [{} for _ in range(self.order)]
        if len(self.counts) != self.order:
            raise ValidationError("one count table per order is required")
        self._compile()

    def _compile(self):
        tables = []
        for table in self.counts:
            compiled = {}
            for ctx, row in table.items():
                toks = sorted(row)
                compiled[ctx] = (
                    float(sum(row.values())),
                    np.fromiter(toks, dtype=np.intp, count=len(toks)),
                    np.fromiter((row[t] for t in toks), dtype=np.float64, count=len(toks)),
                )
            tables.append(compiled)
        self._tables = tables
        self._decay_pows = self.cache_decay ** np.arange(self.context_size - 1, -1, -1, dtype=np.float64)

    @property
    def vocab_size(self):
        return len(self.vocab)

    def ngram_probs(self, context: Sequence[int]) -> np.ndarray:
        """The interpolated add-alpha n-gram distribution (no cache)."""
        V = len(self.vocab)
        n = self.order
        hist = tuple(int(t) for t in context[len(context) - (n - 1):]) if n > 1 else ()
        if len(hist) < n - 1:
            hist = (BOS,) * (n - 1 - len(hist)) + hist
        probs = np.zeros(V)
        base = 0.0
        aV = self.alpha * V
        entries = []
        # interpolation is ordered highest order first
        for k in range(1, n + 1):
            w = self.interpolation[n - k]
            if w == 0.0:
                continue
            h = hist[n - k:] if k > 1 else ()
            entries.append((w, self._tables[k - 1].get(h)))
        if self.backoff:
            seen = sum(w for w, e in entries if e is not None)
            if seen > 0.0:
                entries = [(w / seen, e) for w, e in entries if e is not None]
        for w, entry in entries:
            if entry is None:
                base += w / V
                continue
            total, idx, cnt = entry
            denom = total + aV
            base += w * self.alpha / denom
            probs[idx] += (w / denom) * cnt
        probs += base
        return probs

    def cache_probs(self, context: Sequence[int]) -> np.ndarray | None:
        """Recency-weighted token frequencies over the context, or None if empty."""
        if len(context) == 0:
            return None
        arr = np.asarray(context, dtype=np.intp)
        weights = self._decay_pows[self.context_size - len(arr):].copy()
        weights[arr <= UNK] = 0.0
        total = weights.sum()
        if total <= 0.0:
            return None
        return np.bincount(arr, weights=weights, minlength=len(self.vocab)) / total

    def probs(self, context: Sequence[int]) -> np.ndarray:
        if len(context) > self.context_size:
            raise ContextOverflow(
                f"context of {len(context)} tokens exceeds budget {self.context_size}"
            )
        p = self.ngram_probs(context)
        lam = self.cache_weight
        if lam > 0.0:
            cache = self.cache_probs(context)
            if cache is not None:
                p = (1.0 - lam) * p + lam * cache
        return p

    def log_probs(self, context: Sequence[int]) -> np.ndarray:
        """Next-token log-probabilities; exp of the result sums to 1."""
        return np.log(self.probs(context))


def _check_ids(tokens, V):
    for t in tokens:
        if not 0 <= int(t) < V:
            raise InvalidTokenId(f"token id {t} outside vocabulary of size {V}")


def training_sequence(text: str, vocab: Vocabulary, prompt: str = "") -> tuple[list[int], int]:
    """Token sequence ``prompt BOS text EOS`` and the index of the first target."""
    prefix = tokenize(prompt, vocab) + [BOS]
    return prefix + tokenize(text, vocab) + [EOS], len(prefix)


def train(
    corpus: Sequence[str],
    order: int = 5,
    smoothing_alpha: float = 0.1,
    cache_weight: float = 0.3,
    cache_decay: float = 0.99,
    *,
    vocab: Vocabulary | None = None,
    mode: str = "character",
    prompts: Sequence[str] | str = "",
    context_size: int = DEFAULT_CONTEXT_SIZE,
    interpolation: Sequence[float] | None = None,
    backoff: bool = True,
) -> CacheNGramModel:
    """Count n-grams of every order up to ``order`` over ``corpus``.

    Each example is trained as ``prompt BOS text EOS``; only the text tokens and
    EOS are prediction targets. ``prompts`` is either one prompt shared by all
    examples or one prompt per example.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    if order < 1:
        raise ValidationError("order must be >= 1")
    if isinstance(prompts, str):
        prompts = [prompts] * len(corpus)
    elif len(prompts) != len(corpus):
        raise ValidationError("need one prompt per training example")
    if vocab is None:
        vocab = Vocabulary.build(list(corpus) + list(prompts), mode=mode)

    counts = [defaultdict(lambda: defaultdict(int)) for _ in range(order)]
    pad = [BOS] * (order - 1)
    n_targets = 0
    for text, prompt in zip(corpus, prompts):
        seq, start = training_sequence(text, vocab, prompt)
        padded = pad + seq
        for i in range(start, len(seq)):
            j = i + order - 1  # position of the target in `padded`
            target = padded[j]
            for k in range(1, order + 1):
                counts[k - 1][tuple(padded[j - k + 1:j])][target] += 1
            n_targets += 1

    tables = [{ctx: dict(row) for ctx, row in table.items()} for table in counts]
    return CacheNGramModel(
        vocab=vocab,
        order=order,
        alpha=smoothing_alpha,
        cache_weight=cache_weight,
        cache_decay=cache_decay,
        context_size=context_size,
        interpolation=tuple(interpolation) if interpolation is not None else None,
        backoff=backoff,
        counts=tables,
        meta={"examples": len(corpus), "target_tokens": n_targets},
    )


def log_probs(model: LanguageModel, context: Sequence[int]) -> np.ndarray:
    return model.log_probs(context)


def sequence_log_prob(model: LanguageModel, tokens: Sequence[int], context: Sequence[int] = ()) -> float:
    """Sum of per-step conditional log-probabilities of ``tokens`` after ``context``."""
    _check_ids(tokens, len(model.vocab))
    prefix = list(context)
    total = 0.0
    for t in tokens:
        total += float(model.log_probs(prefix)[t])
        prefix.append(int(t))
    return total


def perplexity(model: LanguageModel, texts: Sequence[str], prompt: str | Sequence[str] = "") -> float:
    """Per-token perplexity of ``texts`` (EOS included) under ``model``.

    ``prompt`` is one prompt for every text or one prompt per text.
    """
    prompts = [prompt] * len(texts) if isinstance(prompt, str) else list(prompt)
    nll = 0.0
    count = 0
    for text, pr in zip(texts, prompts):
        seq, start = training_sequence(text, model.vocab, pr)
        nll -= sequence_log_prob(model, seq[start:], seq[:start])
        count += len(seq) - start
    if count == 0:
        return math.nan
    return math.exp(nll / count)


def ensure_shared_vocab(*models: LanguageModel) -> Vocabulary:
    first = models[0].vocab
    for m in models[1:]:
        if m.vocab != first:
            raise VocabularyMismatch("models do not share one vocabulary")
    return first


# -- persistence -------------------------------------------------------------

def model_to_dict(model: CacheNGramModel) -> dict:
    counts = []
    for table in model.counts:
        rows = []
        for ctx in sorted(table):
            row = table[ctx]
            rows.append([list(ctx), [[t, row[t]] for t in sorted(row)]])
        counts.append(rows)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "vocab": model.vocab.to_dict(),
        "order": model.order,
        "params": {
            "alpha": model.alpha,
            "cache_weight": model.cache_weight,
            "cache_decay": model.cache_decay,
            "context_size": model.context_size,
            "interpolation": list(model.interpolation),
            "backoff": model.backoff,
        },
        "meta": model.meta,
        "counts": counts,
    }


def model_from_dict(d: dict) -> CacheNGramModel:
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelFileError("not a steer-lm model file")
    if d.get("version") != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"model file version {d.get('version')!r}, supported {FORMAT_VERSION}"
        )
    try:
        order = int(d["order"])
        params = d["params"]
        counts = [
            {tuple(ctx): {int(t): int(c) for t, c in row} for ctx, row in table}
            for table in d["counts"]
        ]
        return CacheNGramModel(
            vocab=Vocabulary.from_dict(d["vocab"]),
            order=order,
            alpha=float(params["alpha"]),
            cache_weight=float(params["cache_weight"]),
            cache_decay=float(params["cache_decay"]),
            context_size=int(params["context_size"]),
            interpolation=tuple(params["interpolation"]),
            backoff=bool(params.get("backoff", True)),
            counts=counts,
            meta=dict(d.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc


def save_model(model: CacheNGramModel, path) -> Path:
    """Write the JSON envelope; a ``.gz`` suffix selects gzip (mtime pinned to 0)."""
    path = Path(path)
    payload = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")).encode()
    if path.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    try:
        return atomic_write_bytes(path, payload)
    except SteerIOError as exc:
        raise ModelFileError(str(exc)) from exc


def load_model(path) -> CacheNGramModel:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ModelFileError(f"cannot read model {path}: {exc}") from exc
    try:
        if raw[:2] == b"\x1f\x8b":
            raw = gzip.decompress(raw)
        d = json.loads(raw.decode("utf-8"))
    except (OSError, EOFError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"corrupt or truncated model file {path}: {exc}") from exc
    return model_from_dict(d)
