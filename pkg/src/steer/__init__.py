"""Guided decoding for synthetic text data.

Contrastive expert guidance and negative prompting over a pluggable language
model, with the diversity and coherence metrics used to judge the output.
"""

from ._backend import BACKEND
from .decoding import SamplerConfig, StopCriteria, generate_sequence
from .guidance import (
    ConditioningPrompt,
    GuidanceParams,
    ModelPair,
    cfg_guidance,
    contrastive_expert_guidance,
    negative_prompt_logits,
    steer_combine,
    steer_step,
)
from .lm import CacheNGramModel, load_model, save_model, sequence_log_prob, train
from .vocab import Vocabulary, detokenize, tokenize

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CacheNGramModel",
    "ConditioningPrompt",
    "GuidanceParams",
    "ModelPair",
    "SamplerConfig",
    "StopCriteria",
    "Vocabulary",
    "cfg_guidance",
    "contrastive_expert_guidance",
    "detokenize",
    "generate_sequence",
    "load_model",
    "negative_prompt_logits",
    "save_model",
    "sequence_log_prob",
    "steer_combine",
    "steer_step",
    "tokenize",
    "train",
]
