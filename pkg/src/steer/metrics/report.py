"""The assembled metric report for a (real, synthetic) dataset pair."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from ..embeddings import Embedder, EmbedderConfig
from ..errors import EmptyDataset, EmptyHoldout, ValidationError
from .classifiers import adversarial_auroc, downstream_accuracy
from .coherence import dataset_cosine_similarity, quantized_divergence
from .diversity import NoNgramsWarning, normalized_ngrams
from .hull import HULL_DIM, f_score, hull_precision_recall

CSV_COLUMNS = (
    "gamma", "eta", "norm2", "norm3", "norm4", "diversity", "cosine", "qdiv",
    "auroc", "hull_p", "hull_r", "hull_f", "n", "m", "seed",
)
TOKENIZERS = ("word", "character")


@dataclass(frozen=True)
class MetricConfig:
    tokenizer: str = "word"
    qdiv_k: int | None = None
    qdiv_eps: float = 1e-6
    folds: int = 5
    hull_dim: int = HULL_DIM
    hull_tau: float | None = None
    seed: int = 0
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)

    def __post_init__(self):
        if self.tokenizer not in TOKENIZERS:
            raise ValidationError(f"unknown n-gram tokenizer {self.tokenizer!r}")
        if self.folds < 2:
            raise ValidationError("folds must be >= 2")
        if not self.qdiv_eps > 0:
            raise ValidationError("qdiv_eps must be > 0")

    def tokenize(self, text: str):
        return text.split() if self.tokenizer == "word" else list(text)

    def fingerprint(self) -> str:
        d = asdict(self)
        d["embedder"] = self.embedder.fingerprint()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class MetricReport:
    norm2: float
    norm3: float
    norm4: float
    diversity: float
    cosine: float
    qdiv: float
    auroc: float
    hull_p: float
    hull_r: float
    hull_f: float
    n: int
    m: int
    seed: int
    gamma: float | None = None
    eta: float | None = None
    fingerprint: str = ""
    flags: list[str] = field(default_factory=list)

    @property
    def norm_ngrams(self) -> dict[int, float]:
        return {2: self.norm2, 3: self.norm3, 4: self.norm4}

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def csv_row(self) -> list:
        return [_cell(getattr(self, c)) for c in CSV_COLUMNS]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def csv_text(rows: Sequence[Sequence], columns: Sequence[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def append_csv_row(path, report: MetricReport) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CSV_COLUMNS)
        w.writerow(report.csv_row())


def _texts(data) -> list[str]:
    if hasattr(data, "texts"):
        return list(data.texts())
    return [str(t) for t in data]


def evaluate_pair(real, synth, config: MetricConfig = MetricConfig(), *,
                  embedder: Embedder | None = None, gamma: float | None = None,
                  eta: float | None = None) -> MetricReport:
    """Every metric for one pair, embedding each text once.

    ``real`` and ``synth`` are datasets or sequences of strings. Blank texts
    cannot be embedded; they are left out and the count is recorded in
    ``flags``. Diversity statistics describe the synthetic side.
    """
    flags = []
    sides = []
    for name, data in (("real", real), ("synthetic", synth)):
        texts = _texts(data)
        if not texts:
            raise EmptyDataset(f"{name} dataset is empty")
        kept = [t for t in texts if t.strip()]
        if len(kept) < len(texts):
            flags.append(f"{name}_blank_excluded={len(texts) - len(kept)}")
        if not kept:
            raise EmptyDataset(f"{name} dataset has no non-blank text")
        sides.append(kept)
    real_texts, synth_texts = sides

    norms = {}
    for n in (2, 3, 4):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NoNgramsWarning)
            norms[n] = normalized_ngrams(synth_texts, n, config.tokenize)
        if any(issubclass(w.category, NoNgramsWarning) for w in caught):
            flags.append(f"no_{n}grams")
    diversity = (1.0 - norms[2]) * (1.0 - norms[3]) * (1.0 - norms[4])

    emb = embedder if embedder is not None else Embedder(config.embedder)
    R = emb.embed(real_texts)
    S = emb.embed(synth_texts)
    hp, hr = hull_precision_recall(R, S, config.hull_dim, config.hull_tau)
    return MetricReport(
        norm2=norms[2],
        norm3=norms[3],
        norm4=norms[4],
        diversity=diversity,
        cosine=dataset_cosine_similarity(R, S),
        qdiv=quantized_divergence(R, S, config.qdiv_k, config.qdiv_eps, config.seed),
        auroc=adversarial_auroc(R, S, config.folds, config.seed),
        hull_p=hp,
        hull_r=hr,
        hull_f=f_score(hp, hr),
        n=len(real_texts),
        m=len(synth_texts),
        seed=config.seed,
        gamma=gamma,
        eta=eta,
        fingerprint=config.fingerprint(),
        flags=flags,
    )


def downstream_eval(synth, holdout, embedder: Embedder | None = None) -> float:
    """Real-holdout accuracy of a classifier trained on labelled synthetic records."""
    train = [r for r in synth if r.label is not None and r.text.strip()]
    test = [r for r in holdout if r.label is not None and r.text.strip()]
    if not test:
        raise EmptyHoldout("holdout has no labelled, non-blank records")
    emb = embedder if embedder is not None else Embedder(EmbedderConfig())
    train_X = emb.embed([r.text for r in train]) if train else None
    return downstream_accuracy(
        train_X, [r.label for r in train], emb.embed([r.text for r in test]), [r.label for r in test]
    )
