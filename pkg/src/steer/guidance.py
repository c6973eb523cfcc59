"""Logit reshaping: contrastive expert guidance, negative prompting, CFG, STEER.

All functions operate on unnormalised log-score vectors and never renormalise;
the softmax happens once, in the sampler. ``-inf`` marks a masked token and
stays masked through every combination. NaN and ``+inf`` are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GuidanceRangeError, LengthMismatch, NonFiniteInput
from .lm import LanguageModel, ensure_shared_vocab


@dataclass(frozen=True)
class GuidanceParams:
    gamma: float
    eta: float
    allow_extrapolation: bool = False

    def __post_init__(self):
        for name in ("gamma", "eta"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise GuidanceRangeError(f"{name} must be finite")
            if not self.allow_extrapolation and not 0.0 <= value <= 1.0:
                raise GuidanceRangeError(
                    f"{name}={value} outside [0, 1]; set allow_extrapolation to permit it"
                )


@dataclass(frozen=True)
class ConditioningPrompt:
    positive: tuple[int, ...]
    negative: tuple[int, ...] = ()


@dataclass(frozen=True)
class ModelPair:
    domain: LanguageModel
    base: LanguageModel

    def __post_init__(self):
        ensure_shared_vocab(self.domain, self.base)

    @property
    def vocab(self):
        return self.domain.vocab


def _linear(a, b, ca: float, cb: float) -> np.ndarray:
    """``ca * a + cb * b`` with -inf masks propagated.

    A masked entry masks the output only when its coefficient is non-zero, so
    the reductions at gamma/eta in {0, 1} hold exactly even under masks.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"logit vectors differ in shape: {a.shape} vs {b.shape}")
    for x in (a, b):
        if np.isnan(x).any() or np.isposinf(x).any():
            raise NonFiniteInput("logit vector contains NaN or +inf")
    ma = np.isneginf(a)
    mb = np.isneginf(b)
    if not (ma.any() or mb.any()):
        return ca * a + cb * b
    out = ca * np.where(ma, 0.0, a) + cb * np.where(mb, 0.0, b)
    masked = (ma & (ca != 0)) | (mb & (cb != 0))
    out[masked] = -np.inf
    return out


def contrastive_expert_guidance(domain_logp, base_logp, gamma: float) -> np.ndarray:
    """``log P_domain - gamma * log P_base``."""
    return _linear(domain_logp, base_logp, 1.0, -gamma)


def negative_prompt_mix(cond_logp, uncond_logp, eta: float) -> np.ndarray:
    """``cond + eta * (uncond - cond)``, evaluated as ``(1-eta)*cond + eta*uncond``.

    The second form is algebraically identical and makes the eta=0 and eta=1
    reductions exact in floating point.
    """
    return _linear(cond_logp, uncond_logp, 1.0 - eta, eta)


def negative_prompt_logits(
    domain: LanguageModel, context: Sequence[int], negative: Sequence[int], eta: float
) -> np.ndarray:
    """Negative prompting from two forward passes of the domain model."""
    context = list(context)
    uncond = domain.log_probs(context)
    if len(negative) == 0:
        cond = uncond
    else:
        cond = domain.log_probs(list(negative) + context)
    return negative_prompt_mix(cond, uncond, eta)


def cfg_guidance(uncond_logp, cond_logp, gamma: float) -> np.ndarray:
    """Classifier-free guidance ``u + gamma * (c - u)``; negative gamma repels."""
    return _linear(uncond_logp, cond_logp, 1.0 - gamma, gamma)


def steer_combine(ceg_logp, np_logp) -> np.ndarray:
    return _linear(ceg_logp, np_logp, 1.0, 1.0)


def steer_step(
    models: ModelPair,
    prompt: ConditioningPrompt,
    context: Sequence[int],
    params: GuidanceParams,
) -> np.ndarray:
    """STEER logits for the next token.

    Three evaluations: domain and base on ``c ++ ctx`` and the domain model on
    ``c_neg ++ c ++ ctx``. The domain pass on ``c ++ ctx`` serves both as the
    expert term and as the unconditioned side of negative prompting.
    """
    seq = list(prompt.positive) + list(context)
    domain_lp = models.domain.log_probs(seq)
    base_lp = models.base.log_probs(seq)
    if prompt.negative:
        cond_lp = models.domain.log_probs(list(prompt.negative) + seq)
    else:
        cond_lp = domain_lp
    ceg = contrastive_expert_guidance(domain_lp, base_lp, params.gamma)
    npl = negative_prompt_mix(cond_lp, domain_lp, params.eta)
    return steer_combine(ceg, npl)
