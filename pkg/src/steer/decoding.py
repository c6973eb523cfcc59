"""Token selection and the autoregressive generation loop.

Ties are always broken towards the lower token id. Temperature is applied
before the method's filter.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AllMasked,
    ContextOverflow,
    InvalidK,
    InvalidP,
    MissingEmbeddings,
    NonPositiveTemperature,
    ValidationError,
)
from .rng import Xoshiro256
from .vocab import EOS

METHODS = ("greedy", "top_k", "nucleus", "contrastive_search")

LogitSource = Callable[[Sequence[int]], np.ndarray]


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "nucleus"
    p: float = 0.95
    k: int = 50
    temperature: float = 1.0
    degeneration_alpha: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown sampling method {self.method!r}")
        if not 0.0 < self.p <= 1.0:
            raise InvalidP(f"p={self.p} outside (0, 1]")
        if self.k < 1:
            raise InvalidK(f"k={self.k} must be >= 1")
        if not self.temperature > 0:
            raise NonPositiveTemperature(f"temperature={self.temperature} must be > 0")
        if not 0.0 <= self.degeneration_alpha <= 1.0:
            raise ValidationError("degeneration_alpha must lie in [0, 1]")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class StopCriteria:
    eos: int = EOS
    max_new_tokens: int = 256

    def __post_init__(self):
        if self.max_new_tokens < 0:
            raise ValidationError("max_new_tokens must be >= 0")


def softmax(logp) -> np.ndarray:
    x = np.asarray(logp, dtype=np.float64)
    finite = np.isfinite(x)
    if not finite.any():
        raise AllMasked("every token is masked")
    out = np.zeros_like(x)
    z = x[finite] - x[finite].max()
    e = np.exp(z)
    out[finite] = e / e.sum()
    return out


def apply_temperature(logp, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise NonPositiveTemperature(f"temperature={temperature} must be > 0")
    x = np.asarray(logp, dtype=np.float64)
    if temperature == 1.0:
        return x.copy()
    return x / temperature


def _descending(x) -> np.ndarray:
    # stable sort on the negated scores keeps lower ids first among ties
    return np.argsort(-x, kind="stable")


def top_k_filter(logp, k: int) -> np.ndarray:
    x = np.asarray(logp, dtype=np.float64)
    if not 1 <= k <= x.shape[0]:
        raise InvalidK(f"k={k} outside [1, {x.shape[0]}]")
    if k == x.shape[0]:
        return x.copy()
    out = np.full_like(x, -np.inf)
    keep = _descending(x)[:k]
    out[keep] = x[keep]
    return out


def nucleus_filter(logp, p: float) -> np.ndarray:
    """Keep the smallest high-probability prefix whose mass reaches ``p``."""
    if not 0.0 < p <= 1.0:
        raise InvalidP(f"p={p} outside (0, 1]")
    x = np.asarray(logp, dtype=np.float64)
    if p >= 1.0:
        return x.copy()
    probs = softmax(x)
    # rank by the scores themselves: distinct scores can round to equal probabilities
    order = _descending(x)
    cum = np.cumsum(probs[order])
    n_keep = int(np.searchsorted(cum, p, side="left")) + 1
    n_keep = min(n_keep, int(np.isfinite(x).sum()))
    out = np.full_like(x, -np.inf)
    keep = order[:n_keep]
    out[keep] = x[keep]
    return out


def greedy(logp) -> int:
    x = np.asarray(logp, dtype=np.float64)
    if not np.isfinite(x).any():
        raise AllMasked("every token is masked")
    return int(np.argmax(x))


def sample_token(logp, rng: Xoshiro256) -> int:
    """Inverse-CDF draw over the softmax of the finite entries, in id order."""
    probs = softmax(logp)
    cum = np.cumsum(probs)
    u = rng.random() * cum[-1]
    idx = int(np.searchsorted(cum, u, side="right"))
    last = int(np.flatnonzero(probs > 0)[-1])
    return min(idx, last)


def contrastive_search_step(
    model_logp,
    context: Sequence[int],
    k: int,
    degeneration_alpha: float,
    token_embeddings,
) -> int:
    """Contrastive search over the top-k candidates.

    Score is ``(1 - a) * P(v | ctx) - a * max_j cos(e_v, e_ctx_j)``; an empty
    context contributes no penalty. ``model_logp`` is the next-token log-score
    vector of the model at ``context``.
    """
    x = np.asarray(model_logp, dtype=np.float64)
    if token_embeddings is None:
        raise MissingEmbeddings("contrastive search needs a token embedding table")
    emb = np.asarray(token_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] != x.shape[0]:
        raise MissingEmbeddings(
            f"token embedding table has shape {emb.shape}, vocabulary is {x.shape[0]}"
        )
    if not 1 <= k <= x.shape[0]:
        raise InvalidK(f"k={k} outside [1, {x.shape[0]}]")
    probs = softmax(x)
    cand = _descending(x)[:k]
    cand = cand[probs[cand] > 0] if (probs[cand] > 0).any() else cand[:1]
    if len(cand) == 1:
        return int(cand[0])
    if len(context) == 0 or degeneration_alpha == 0.0:
        penalty = np.zeros(len(cand))
    else:
        ctx = emb[np.asarray(context, dtype=np.intp)]
        ce = emb[cand]
        cn = np.linalg.norm(ce, axis=1, keepdims=True)
        xn = np.linalg.norm(ctx, axis=1, keepdims=True)
        sims = (ce / np.where(cn == 0, 1, cn)) @ (ctx / np.where(xn == 0, 1, xn)).T
        penalty = sims.max(axis=1)
    score = (1.0 - degeneration_alpha) * probs[cand] - degeneration_alpha * penalty
    return int(cand[int(np.argmax(score))])


def filter_logits(logp, sampler: SamplerConfig) -> np.ndarray:
    x = apply_temperature(logp, sampler.temperature)
    if sampler.method == "top_k":
        return top_k_filter(x, sampler.k)
    if sampler.method == "nucleus":
        return nucleus_filter(x, sampler.p)
    return x


def generate_sequence(
    logit_source: LogitSource,
    prompt_context: Sequence[int],
    sampler: SamplerConfig,
    stop: StopCriteria,
    *,
    rng: Xoshiro256 | None = None,
    context_size: int | None = None,
    token_embeddings=None,
    banned_tokens: Sequence[int] = (),
) -> list[int]:
    """Autoregressively extend ``prompt_context``; returns new tokens without EOS.

    ``logit_source(ctx)`` receives the generated tokens only (the prompt is
    bound into the source); ``prompt_context`` is used for the budget check and
    as the contrastive-search history.
    """
    if context_size is not None and len(prompt_context) + stop.max_new_tokens > context_size:
        raise ContextOverflow(
            f"prompt of {len(prompt_context)} tokens plus {stop.max_new_tokens} new tokens "
            f"exceeds budget {context_size}"
        )
    if rng is None:
        rng = Xoshiro256(sampler.seed)
    banned = np.asarray(sorted(set(int(t) for t in banned_tokens)), dtype=np.intp)
    out: list[int] = []
    history = list(prompt_context)
    while len(out) < stop.max_new_tokens:
        logp = np.asarray(logit_source(out), dtype=np.float64)
        if banned.size:
            logp = logp.copy()
            logp[banned] = -np.inf
        if sampler.method == "greedy":
            tok = greedy(logp)
        elif sampler.method == "contrastive_search":
            tok = contrastive_search_step(
                apply_temperature(logp, sampler.temperature),
                history,
                sampler.k,
                sampler.degeneration_alpha,
                token_embeddings,
            )
        else:
            tok = sample_token(filter_logits(logp, sampler), rng)
        if tok == stop.eos:
            break
        out.append(tok)
        history.append(tok)
    return out


def model_source(model, prompt: Sequence[int]) -> LogitSource:
    """Plain model logits with ``prompt`` bound in front of the generated tokens."""
    prefix = list(prompt)

    def source(generated):
        return model.log_probs(prefix + list(generated))

    return source


def steer_source(models, prompt, params) -> LogitSource:
    """STEER logits for a fixed :class:`~steer.guidance.ConditioningPrompt`."""
    from .guidance import steer_step

    def source(generated):
        return steer_step(models, prompt, generated, params)

    return source
