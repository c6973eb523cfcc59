"""Synthetic dataset generation with negative prompting, and (gamma, eta) sweeps.

Generation follows a fixed per-example recipe:

* example ``i`` gets seed ``s_i = derive_seed(job.seed, i)``;
* the negative prompt is drawn from the pool (real records, then synthetic
  records visible to the example) with ``Xoshiro256(derive_seed(s_i, 0))``;
* sampling attempt ``a`` (0, or 1 on the single retry after an empty output)
  uses ``Xoshiro256(derive_seed(s_i, 1 + a))``.

The model context is ``negative ++ instruction ++ BOS ++ generated``, where the
negative prompt is the sampled texts joined and terminated by the separator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, Sequence

from .data import SEPARATOR, Dataset, DatasetRecord, escape_separator
from .decoding import SamplerConfig, StopCriteria, generate_sequence, model_source, steer_source
from .errors import BudgetExceeded, SteerError, ValidationError
from .guidance import ConditioningPrompt, GuidanceParams, ModelPair
from .lm import instruction_text
from .metrics.report import CSV_COLUMNS, MetricConfig, MetricReport, csv_text, evaluate_pair
from .rng import Xoshiro256, derive_seed
from .vocab import BOS, PAD, UNK, detokenize, tokenize

SOURCES = ("steer", "domain", "base")


@dataclass(frozen=True)
class GenerationJob:
    """Everything that determines a synthetic dataset, apart from the models.

    ``source`` selects STEER logits or plain sampling from one model (the
    baselines). ``quotas`` maps label to count and must sum to ``m``; labels
    are then dealt round-robin in the given order. ``batch_size`` > 1 freezes
    the synthetic half of the negative-prompt pool at the start of each batch.
    ``converged`` is an optional predicate on the synthetic dataset so far;
    generation stops early once it returns True.
    """

    instruction: str
    m: int
    guidance: GuidanceParams
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    negative_count: int = 8
    stop: StopCriteria = field(default_factory=StopCriteria)
    seed: int = 0
    quotas: tuple[tuple[str, int], ...] | None = None
    source: str = "steer"
    batch_size: int = 1
    banned_tokens: tuple[int, ...] = (PAD, BOS, UNK)
    converged: Callable[[Dataset], bool] | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ValidationError("m must be >= 0")
        if self.negative_count < 0:
            raise ValidationError("negative_count must be >= 0")
        if self.source not in SOURCES:
            raise ValidationError(f"unknown source {self.source!r}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.quotas is not None:
            q = tuple((str(k), int(v)) for k, v in dict(self.quotas).items())
            if any(v < 0 for _, v in q) or sum(v for _, v in q) != self.m:
                raise ValidationError("label quotas must be non-negative and sum to m")
            object.__setattr__(self, "quotas", q)

    def labels(self) -> list[str | None]:
        if self.quotas is None:
            return [None] * self.m
        left = dict(self.quotas)
        order = [k for k, _ in self.quotas]
        out = []
        while len(out) < self.m:
            for k in order:
                if left[k] > 0:
                    out.append(k)
                    left[k] -= 1
        return out


def negative_tokens(texts: Sequence[str], vocab) -> list[int]:
    if not texts:
        return []
    return tokenize(SEPARATOR.join(texts) + SEPARATOR, vocab)


def build_negative_prompt(real: Dataset, synth: Dataset, K: int, rng: Xoshiro256, budget: int,
                          vocab) -> tuple[list[int], list[str]]:
    """Sample up to ``K`` pooled records and return ``(tokens, record_ids)``.

    Records are drawn without replacement from ``real`` followed by ``synth``.
    Whole records are dropped from the end until the tokens fit in ``budget``.
    """
    pool = list(real) + list(synth)
    if K <= 0 or not pool:
        return [], []
    chosen = [pool[i] for i in rng.sample_indices(len(pool), K)]
    while chosen:
        toks = negative_tokens([r.text for r in chosen], vocab)
        if len(toks) <= budget:
            return toks, [r.id for r in chosen]
        chosen.pop()
    return [], []


def _positive(job: GenerationJob, label, vocab) -> list[int]:
    return tokenize(instruction_text(job.instruction, label), vocab) + [BOS]


def _sample_text(job, models, positive, negative, seed, token_embeddings):
    vocab = models.vocab
    if job.source == "steer":
        source = steer_source(models, ConditioningPrompt(tuple(positive), tuple(negative)), job.guidance)
        context = negative + positive
    else:
        model = models.domain if job.source == "domain" else models.base
        source = model_source(model, positive)
        context = positive
    toks = generate_sequence(
        source,
        context,
        job.sampler,
        job.stop,
        rng=Xoshiro256(seed),
        context_size=models.domain.context_size,
        token_embeddings=token_embeddings,
        banned_tokens=job.banned_tokens,
    )
    return escape_separator(detokenize(toks, vocab))


def _headroom(job, models, positive):
    return models.domain.context_size - len(positive) - job.stop.max_new_tokens


def generate_dataset(job: GenerationJob, models: ModelPair, real: Dataset | None = None, *,
                     token_embeddings=None) -> Dataset:
    real = real if real is not None else Dataset([], "real")
    vocab = models.vocab
    records: list[DatasetRecord] = []
    visible = 0
    for i, label in enumerate(job.labels()):
        if i % job.batch_size == 0:
            visible = len(records)
        s_i = derive_seed(job.seed, i)
        positive = _positive(job, label, vocab)
        budget = _headroom(job, models, positive)
        if budget < 0:
            raise ValidationError("instruction plus max_new_tokens exceed the context budget")
        negative, neg_ids = [], []
        if job.source == "steer":
            negative, neg_ids = build_negative_prompt(
                real, Dataset(records[:visible], "synthetic"), job.negative_count,
                Xoshiro256(derive_seed(s_i, 0)), budget, vocab,
            )
        meta = {
            "gamma": job.guidance.gamma,
            "eta": job.guidance.eta,
            "sampler": job.sampler.fingerprint(),
            "seed": s_i,
            "negative_prompt_ids": neg_ids,
            "source": job.source,
        }
        for attempt in range(2):
            text = _sample_text(job, models, positive, negative, derive_seed(s_i, 1 + attempt),
                                token_embeddings)
            if text.strip():
                break
        meta["attempt"] = attempt
        if not text.strip():
            meta["quality"] = "empty"
        if job.batch_size > 1:
            meta["pool_snapshot"] = visible
        records.append(DatasetRecord(f"s{i:06d}", text, label, meta))
        if job.converged is not None and job.converged(Dataset(list(records), "synthetic")):
            break
    return Dataset(records, "synthetic")


def replay_record(record: DatasetRecord, job: GenerationJob, models: ModelPair, pool: Dataset,
                  *, token_embeddings=None) -> str:
    """Regenerate one synthetic record from its seed and negative-prompt ids.

    ``pool`` must contain every id listed in the record's metadata.
    """
    by_id = pool.by_id()
    meta = record.meta or {}
    texts = [by_id[i].text for i in meta.get("negative_prompt_ids", [])]
    vocab = models.vocab
    positive = _positive(job, record.label, vocab)
    return _sample_text(job, models, positive, negative_tokens(texts, vocab),
                        derive_seed(meta["seed"], 1 + meta.get("attempt", 0)), token_embeddings)


@dataclass(frozen=True)
class SweepGrid:
    gammas: tuple[float, ...]
    etas: tuple[float, ...]
    per_cell: int
    job: GenerationJob
    budget: int = 10_000

    def __post_init__(self):
        if not self.gammas or not self.etas:
            raise ValidationError("sweep axes must be non-empty")
        if self.per_cell < 1:
            raise ValidationError("per_cell must be >= 1")

    def cells(self) -> list[tuple[float, float]]:
        return list(product(self.gammas, self.etas))

    def total(self) -> int:
        return len(self.cells()) * self.per_cell


SWEEP_COLUMNS = CSV_COLUMNS + ("error",)


@dataclass
class SweepResult:
    rows: list[list]
    reports: list[MetricReport | None]
    datasets: list[Dataset | None]
    generated: int

    def csv(self) -> str:
        return csv_text(self.rows, SWEEP_COLUMNS)


def run_sweep(grid: SweepGrid, models: ModelPair, real: Dataset, *, pool: Dataset | None = None,
              metrics: MetricConfig = MetricConfig(), embedder=None, allow_extrapolation=False,
              on_cell: Callable[[int, float, float], None] | None = None) -> SweepResult:
    """One generation plus evaluation per (gamma, eta) cell.

    Cell ``c`` (row-major, gamma outer) uses master seed ``derive_seed(job.seed, c)``.
    Negative prompts draw from ``pool`` (default ``real``); metrics compare with ``real``.
    A failing cell yields a row of NaNs with the error text, not a missing row.
    """
    if grid.total() > grid.budget:
        raise BudgetExceeded(f"sweep needs {grid.total()} generations, budget is {grid.budget}")
    pool = pool if pool is not None else real
    rows, reports, datasets = [], [], []
    generated = 0
    for c, (g, e) in enumerate(grid.cells()):
        if on_cell is not None:
            on_cell(c, g, e)
        synth = None
        # a failing cell still consumes its slot in the accounting
        generated += grid.per_cell
        try:
            job = replace(grid.job, m=grid.per_cell, quotas=None, seed=derive_seed(grid.job.seed, c),
                          guidance=GuidanceParams(g, e, allow_extrapolation))
            synth = generate_dataset(job, models, pool)
            rep = evaluate_pair(real, synth, metrics, embedder=embedder, gamma=g, eta=e)
            rows.append(rep.csv_row() + [""])
            reports.append(rep)
            datasets.append(synth)
        except SteerError as exc:
            row = {k: math.nan for k in CSV_COLUMNS}
            row.update(gamma=g, eta=e, n=len(real), m=0, seed=metrics.seed)
            rows.append([_fmt(row[k]) for k in CSV_COLUMNS] + [f"{type(exc).__name__}: {exc}"])
            reports.append(None)
            datasets.append(synth)
    return SweepResult(rows, reports, datasets, generated)


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


AXIS_COLUMNS = ("axis", "value", "norm3", "diversity", "cosine", "qdiv", "auroc", "hull_f")


def single_axis_table(grid: SweepGrid, result: SweepResult) -> str | None:
    """Metrics along the varying axis when the other axis has a single value."""
    if len(grid.gammas) == 1 and len(grid.etas) > 1:
        axis, values = "eta", [e for _, e in grid.cells()]
    elif len(grid.etas) == 1:
        axis, values = "gamma", [g for g, _ in grid.cells()]
    else:
        return None
    rows = []
    for v, rep in zip(values, result.reports):
        if rep is None:
            rows.append([axis, _fmt(v)] + ["nan"] * (len(AXIS_COLUMNS) - 2))
        else:
            rows.append([axis, _fmt(v)] + [_fmt(getattr(rep, k)) for k in AXIS_COLUMNS[2:]])
    return csv_text(rows, AXIS_COLUMNS)


def tradeoff_pairs(result: SweepResult) -> list[tuple[float, float, float, float]]:
    """``(gamma, eta, diversity, qdiv)`` for every successful cell."""
    return [(r.gamma, r.eta, r.diversity, r.qdiv) for r in result.reports if r is not None]


def weakly_dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] >= b[0] and a[1] >= b[1]


def pareto_front(pairs):
    """Cells not strictly dominated on ``(diversity, qdiv)``."""
    out = []
    for p in pairs:
        strictly = any(
            weakly_dominates(q[2:], p[2:]) and q[2:] != p[2:] for q in pairs
        )
        if not strictly:
            out.append(p)
    return out


def tradeoff_csv(result: SweepResult) -> str:
    pairs = tradeoff_pairs(result)
    front = set(pareto_front(pairs))
    rows = [[_fmt(g), _fmt(e), _fmt(d), _fmt(q), int((g, e, d, q) in front)] for g, e, d, q in pairs]
    return csv_text(rows, ("gamma", "eta", "diversity", "qdiv", "pareto"))
