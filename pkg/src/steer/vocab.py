"""Vocabulary, tokenisation and detokenisation.

Two modes are supported: ``character`` (one token per Unicode code point) and
``word`` (whitespace-separated words). Ids 0..3 are reserved for PAD, BOS, EOS
and UNK in that order.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InvalidTokenId, ValidationError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")
MODES = ("character", "word")

# Printable ASCII plus newline: seeding character vocabularies with this set
# keeps models trained on different ASCII corpora on one shared vocabulary.
BASE_ALPHABET = tuple(sorted(set(string.printable) - set("\t\r\x0b\x0c")))


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    mode: str = "character"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown vocabulary mode {self.mode!r}")
        if tuple(self.tokens[:4]) != RESERVED:
            raise ValidationError("vocabulary must start with the reserved tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError("vocabulary tokens must be distinct")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def build(cls, texts: Iterable[str], mode: str = "character", base_alphabet: bool = True):
        """Vocabulary over every symbol in ``texts``, sorted for stability."""
        symbols = set()
        if mode == "character":
            if base_alphabet:
                symbols.update(BASE_ALPHABET)
            for t in texts:
                symbols.update(t)
        elif mode == "word":
            for t in texts:
                symbols.update(t.split())
        else:
            raise ValidationError(f"unknown vocabulary mode {mode!r}")
        symbols.difference_update(RESERVED)
        return cls(RESERVED + tuple(sorted(symbols)), mode)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, UNK)

    def to_dict(self):
        return {"mode": self.mode, "tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["tokens"]), d["mode"])


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Map text to ids; unknown symbols become UNK. No BOS/EOS is inserted."""
    index = vocab._index
    if vocab.mode == "character":
        return [index.get(ch, UNK) for ch in text]
    return [index.get(w, UNK) for w in text.split()]


def detokenize(tokens: Sequence[int], vocab: Vocabulary) -> str:
    """Inverse of :func:`tokenize`; reserved tokens render as nothing."""
    n = len(vocab.tokens)
    parts = []
    for t in tokens:
        t = int(t)
        if not 0 <= t < n:
            raise InvalidTokenId(f"token id {t} outside vocabulary of size {n}")
        if t > UNK:
            parts.append(vocab.tokens[t])
    sep = "" if vocab.mode == "character" else " "
    return sep.join(parts)
