"""Command-line driver: ``steer {train,generate,evaluate,sweep}``.

Settings come from three layers, highest first: command-line flags, the TOML
file given with ``--config``, and built-in defaults. The file holds optional
top-level ``seed`` and ``out`` keys plus one table per subcommand; any other
key is rejected. Relative paths in the file are resolved against the file's
directory. ``gamma``, ``eta`` and ``m`` (``gammas``, ``etas``, ``per_cell`` for
sweeps) have no default and must be given explicitly.

Exit codes: 0 success, 2 configuration or validation error, 3 I/O or backend
error, 4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from ._io import atomic_write_text
from .data import Dataset, ingest_dataset
from .decoding import METHODS, SamplerConfig, StopCriteria
from .embeddings import EmbedderConfig, token_embedding_table
from .errors import BudgetExceeded, ConfigError, SteerError, SteerIOError, ValidationError
from .guidance import GuidanceParams, ModelPair
from .lm import DEFAULT_CONTEXT_SIZE, instruction_text, load_model, perplexity, save_model, train
from .metrics.report import MetricConfig, append_csv_row, evaluate_pair
from .pipeline import (
    GenerationJob,
    SweepGrid,
    generate_dataset,
    run_sweep,
    single_axis_table,
    tradeoff_csv,
)
from .rng import Xoshiro256, derive_seed
from .vocab import Vocabulary, tokenize

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

GLOBAL_KEYS = {"seed": 0, "out": "."}

_SAMPLING = {
    "method": "nucleus",
    "p": 0.95,
    "k": 50,
    "temperature": 1.0,
    "degeneration_alpha": 0.6,
    "max_new_tokens": 256,
}
_METRIC = {
    "tokenizer": "word",
    "qdiv_k": None,
    "qdiv_eps": 1e-6,
    "folds": 5,
    "hull_dim": 5,
    "embed_dim": 256,
    "ngram_low": 1,
    "ngram_high": 3,
}
_GEN = {
    "base": None,
    "domain": None,
    "real": None,
    "instruction": "",
    "negatives": 8,
    "allow_extrapolation": False,
    "source": "steer",
    "batch_size": 1,
    **_SAMPLING,
}

DEFAULTS = {
    "train": {
        "corpus": None,
        "role": None,
        "format": None,
        "instruction": "",
        "vocab_corpus": [],
        "mode": "character",
        "order": 5,
        "alpha": 0.1,
        "cache_weight": 0.3,
        "cache_decay": 0.99,
        "interpolation": None,
        "backoff": True,
        "context_size": DEFAULT_CONTEXT_SIZE,
        "model": None,
    },
    "generate": {**_GEN, "gamma": None, "eta": None, "m": None, "labels": None, "output": None},
    "evaluate": {"real": None, "synth": None, "report": None, "ledger": None, "gamma": None,
                 "eta": None, **_METRIC},
    "sweep": {**_GEN, "gammas": None, "etas": None, "per_cell": None, "budget": 10_000,
              "holdout": None, "keep_datasets": False, **_METRIC},
}
REQUIRED = {
    "train": ("corpus", "role"),
    "generate": ("base", "domain", "real", "gamma", "eta", "m"),
    "evaluate": ("real", "synth"),
    "sweep": ("base", "domain", "real", "gammas", "etas", "per_cell"),
}
PATH_KEYS = {"corpus", "vocab_corpus", "model", "base", "domain", "real", "synth", "output",
             "report", "ledger", "holdout", "out"}


def _floats(s):
    try:
        return tuple(float(x) for x in str(s).split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from exc


def _bool(s):
    v = str(s).lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="steer", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", type=Path, help="TOML settings file")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", type=Path, help="output directory (default .)")
    p.add_argument("--version", action="version", version=f"steer {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def opt(sp, name, **kw):
        sp.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)

    t = sub.add_parser("train", help="train a base or domain model")
    opt(t, "corpus", type=Path)
    opt(t, "role", choices=("base", "domain"))
    opt(t, "format", choices=("lines", "jsonl"))
    opt(t, "instruction", help="prompt preceding every training example")
    opt(t, "vocab_corpus", type=Path, nargs="*", help="extra corpora whose symbols join the vocabulary")
    opt(t, "mode", choices=("character", "word"))
    opt(t, "order", type=int)
    opt(t, "alpha", type=float)
    opt(t, "cache_weight", type=float)
    opt(t, "cache_decay", type=float)
    opt(t, "interpolation", type=_floats, help="weights, highest order first")
    opt(t, "backoff", type=_bool)
    opt(t, "context_size", type=int)
    opt(t, "model", type=Path, help="output model path (default OUT/ROLE.steer-lm.json)")

    def gen_opts(sp):
        opt(sp, "base", type=Path)
        opt(sp, "domain", type=Path)
        opt(sp, "real", type=Path, help="real corpus; the negative-prompt pool")
        opt(sp, "instruction")
        opt(sp, "negatives", type=int, help="records per negative prompt (K)")
        opt(sp, "allow_extrapolation", type=_bool)
        opt(sp, "source", choices=("steer", "domain", "base"))
        opt(sp, "batch_size", type=int)
        opt(sp, "method", choices=METHODS)
        opt(sp, "p", type=float)
        opt(sp, "k", type=int)
        opt(sp, "temperature", type=float)
        opt(sp, "degeneration_alpha", type=float)
        opt(sp, "max_new_tokens", type=int)

    def metric_opts(sp):
        opt(sp, "tokenizer", choices=("word", "character"))
        opt(sp, "qdiv_k", type=int)
        opt(sp, "qdiv_eps", type=float)
        opt(sp, "folds", type=int)
        opt(sp, "hull_dim", type=int)
        opt(sp, "embed_dim", type=int)
        opt(sp, "ngram_low", type=int)
        opt(sp, "ngram_high", type=int)

    g = sub.add_parser("generate", help="generate a synthetic dataset")
    gen_opts(g)
    opt(g, "gamma", type=float)
    opt(g, "eta", type=float)
    opt(g, "m", type=int)
    opt(g, "labels", help="LABEL:COUNT,... or 'uniform' over the real labels")
    opt(g, "output", type=Path, help="output JSONL (default OUT/synthetic.jsonl)")

    e = sub.add_parser("evaluate", help="score a synthetic dataset against a real one")
    opt(e, "real", type=Path)
    opt(e, "synth", type=Path)
    opt(e, "report", type=Path, help="report JSON (default OUT/report.json)")
    opt(e, "ledger", type=Path, help="CSV to append a row to (default OUT/metrics.csv)")
    opt(e, "gamma", type=float)
    opt(e, "eta", type=float)
    metric_opts(e)

    s = sub.add_parser("sweep", help="generate and evaluate over a (gamma, eta) grid")
    gen_opts(s)
    opt(s, "gammas", type=_floats)
    opt(s, "etas", type=_floats)
    opt(s, "per_cell", type=int)
    opt(s, "budget", type=int)
    opt(s, "holdout", type=Path, help="real data scored against (default: --real)")
    s.add_argument("--keep-datasets", dest="keep_datasets", action="store_const", const=True, default=None)
    metric_opts(s)
    return p


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise SteerIOError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    base = Path(path).resolve().parent
    for key, value in doc.items():
        if key in DEFAULTS:
            if not isinstance(value, dict):
                raise ConfigError(f"config {path}: [{key}] must be a table")
            for k in value:
                if k not in DEFAULTS[key]:
                    raise ConfigError(f"config {path}: unknown key {key}.{k}")
            doc[key] = {k: _resolve(k, v, base) for k, v in value.items()}
        elif key in GLOBAL_KEYS:
            doc[key] = _resolve(key, value, base)
        else:
            raise ConfigError(f"config {path}: unknown key {key}")
    return doc


def _resolve(key, value, base):
    if key not in PATH_KEYS or value is None:
        return value
    if isinstance(value, list):
        return [base / Path(v) for v in value]
    return base / Path(value)


def resolve_settings(args: argparse.Namespace, config: dict) -> dict:
    """Merge flag > config file > default for the chosen subcommand."""
    cmd = args.command
    section = config.get(cmd, {})
    out = {}
    for key, default in {**GLOBAL_KEYS, **DEFAULTS[cmd]}.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in GLOBAL_KEYS and key in config:
            out[key] = config[key]
        elif key in section:
            out[key] = section[key]
        else:
            out[key] = default
    missing = [k for k in REQUIRED[cmd] if out[k] is None]
    if missing:
        raise ConfigError(f"{cmd}: missing required setting(s): {', '.join(missing)}")
    out["out"] = Path(out["out"])
    return out


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(command: str, settings: dict, outputs: list[Path], extra: dict | None = None,
                   name: str | None = None):
    clean = {k: _jsonable(v) for k, v in sorted(settings.items())}
    blob = json.dumps(clean, sort_keys=True).encode()
    manifest = {
        "command": command,
        "settings": clean,
        "fingerprint": hashlib.sha256(blob).hexdigest()[:16],
        "seed": settings["seed"],
        "outputs": [str(p) for p in outputs],
        "versions": {
            "steer": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernels": BACKEND,
        },
    }
    if extra:
        manifest.update(extra)
    path = settings["out"] / f"manifest-{name or command}.json"
    atomic_write_text(path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


def _print(*parts):
    print(*parts, flush=True)


# -- train --------------------------------------------------------------------

def cmd_train(s: dict) -> int:
    ds = ingest_dataset(s["corpus"], s["format"])
    if len(ds) == 0:
        raise ValidationError(f"corpus {s['corpus']} has no examples")
    texts = ds.texts()
    prompts = [instruction_text(s["instruction"], lab) for lab in ds.labels()]
    extra = []
    for path in s["vocab_corpus"] or []:
        extra.extend(ingest_dataset(path).texts())
    vocab = Vocabulary.build(texts + prompts + extra, mode=s["mode"])

    n = len(texts)
    held = set()
    if n >= 2:
        rng = Xoshiro256(derive_seed(s["seed"], 0))
        held = set(rng.sample_indices(n, max(1, n // 20)))
    train_idx = [i for i in range(n) if i not in held]
    model = train(
        [texts[i] for i in train_idx],
        s["order"],
        s["alpha"],
        s["cache_weight"],
        s["cache_decay"],
        vocab=vocab,
        prompts=[prompts[i] for i in train_idx],
        context_size=s["context_size"],
        interpolation=s["interpolation"],
        backoff=s["backoff"],
    )
    model.meta.update({"role": s["role"], "heldout": len(held), "seed": s["seed"]})
    ppl = float("nan")
    if held:
        hold_ids = sorted(held)
        ppl = perplexity(model, [texts[i] for i in hold_ids], [prompts[i] for i in hold_ids])
    path = s["model"] or s["out"] / f"{s['role']}.steer-lm.json"
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    tokens = sum(len(tokenize(t, vocab)) for t in texts)
    _print(f"trained {s['role']} model: tokens={tokens} vocab={len(vocab)} "
           f"heldout_perplexity={ppl:.4f} -> {path}")
    write_manifest("train", s, [Path(path)], {"heldout_perplexity": ppl}, name=f"train-{s['role']}")
    return 0


# -- generate -----------------------------------------------------------------

def _models(s):
    return ModelPair(load_model(s["domain"]), load_model(s["base"]))


def _sampler(s):
    return SamplerConfig(s["method"], s["p"], s["k"], s["temperature"], s["degeneration_alpha"],
                         s["seed"])


def _quotas(wanted, m, real: Dataset):
    if wanted is None:
        return None
    if isinstance(wanted, dict):
        return tuple((str(k), int(v)) for k, v in wanted.items())
    if wanted == "uniform":
        labels = sorted({lab for lab in real.labels() if lab is not None})
        if not labels:
            raise ValidationError("labels='uniform' needs labelled real data")
        base, extra = divmod(m, len(labels))
        return tuple((lab, base + (i < extra)) for i, lab in enumerate(labels))
    out = []
    for part in str(wanted).split(","):
        lab, sep, cnt = part.rpartition(":")
        if not sep or not lab:
            raise ValidationError(f"labels: expected LABEL:COUNT, got {part!r}")
        try:
            out.append((lab, int(cnt)))
        except ValueError as exc:
            raise ValidationError(f"labels: bad count in {part!r}") from exc
    return tuple(out)


def _token_table(s, real, models):
    if s["method"] != "contrastive_search":
        return None
    seqs = [tokenize(t, models.vocab) for t in real.texts()]
    return token_embedding_table(seqs, len(models.vocab))


def _job(s, gamma, eta, m, quotas=None):
    return GenerationJob(
        instruction=s["instruction"],
        m=m,
        guidance=GuidanceParams(gamma, eta, bool(s["allow_extrapolation"])),
        sampler=_sampler(s),
        negative_count=s["negatives"],
        stop=StopCriteria(max_new_tokens=s["max_new_tokens"]),
        seed=s["seed"],
        quotas=quotas,
        source=s["source"],
        batch_size=s["batch_size"],
    )


def cmd_generate(s: dict) -> int:
    # validate the cheap things before loading models
    GuidanceParams(s["gamma"], s["eta"], bool(s["allow_extrapolation"]))
    start = time.perf_counter()
    real = ingest_dataset(s["real"])
    quotas = _quotas(s["labels"], s["m"], real)
    job = _job(s, s["gamma"], s["eta"], s["m"], quotas)
    models = _models(s)
    synth = generate_dataset(job, models, real, token_embeddings=_token_table(s, real, models))
    path = s["output"] or s["out"] / "synthetic.jsonl"
    synth.write(path)
    elapsed = time.perf_counter() - start
    mean_len = float(np.mean([len(t) for t in synth.texts()])) if len(synth) else 0.0
    _print(f"generated m={len(synth)} mean_length={mean_len:.1f} elapsed={elapsed:.2f}s -> {path}")
    write_manifest("generate", s, [Path(path)])
    return 0


# -- evaluate -----------------------------------------------------------------

def _metric_config(s):
    emb = EmbedderConfig(ngram_range=(s["ngram_low"], s["ngram_high"]), dim=s["embed_dim"])
    return MetricConfig(tokenizer=s["tokenizer"], qdiv_k=s["qdiv_k"], qdiv_eps=s["qdiv_eps"],
                        folds=s["folds"], hull_dim=s["hull_dim"], seed=s["seed"], embedder=emb)


def cmd_evaluate(s: dict) -> int:
    real = ingest_dataset(s["real"])
    synth = ingest_dataset(s["synth"])
    report = evaluate_pair(real, synth, _metric_config(s), gamma=s["gamma"], eta=s["eta"])
    report_path = s["report"] or s["out"] / "report.json"
    ledger = s["ledger"] or s["out"] / "metrics.csv"
    atomic_write_text(report_path, report.to_json())
    try:
        append_csv_row(ledger, report)
    except OSError as exc:
        raise SteerIOError(f"cannot append to {ledger}: {exc}") from exc
    _print(f"cosine={report.cosine:.4f} qdiv={report.qdiv:.4f} auroc={report.auroc:.4f} "
           f"diversity={report.diversity:.4f} norm3={report.norm3:.4f} "
           f"hull_f={report.hull_f:.4f} -> {report_path}")
    write_manifest("evaluate", s, [Path(report_path), Path(ledger)])
    return 0


# -- sweep --------------------------------------------------------------------

def cmd_sweep(s: dict) -> int:
    allow = bool(s["allow_extrapolation"])
    for g in s["gammas"]:
        for e in s["etas"]:
            GuidanceParams(g, e, allow)
    job = _job(s, 0.0, 1.0, 0)
    grid = SweepGrid(tuple(s["gammas"]), tuple(s["etas"]), s["per_cell"], job, s["budget"])
    if grid.total() > grid.budget:
        raise BudgetExceeded(f"sweep needs {grid.total()} generations, budget is {grid.budget}")
    pool = ingest_dataset(s["real"])
    holdout = ingest_dataset(s["holdout"]) if s["holdout"] is not None else pool
    models = _models(s)
    start = time.perf_counter()
    result = run_sweep(grid, models, holdout, pool=pool, metrics=_metric_config(s),
                       allow_extrapolation=allow)
    out = s["out"]
    outputs = [atomic_write_text(out / "sweep.csv", result.csv())]
    axis = single_axis_table(grid, result)
    if axis is not None:
        outputs.append(atomic_write_text(out / "sweep_axis.csv", axis))
    outputs.append(atomic_write_text(out / "tradeoff.csv", tradeoff_csv(result)))
    if s["keep_datasets"]:
        for c, ds in enumerate(result.datasets):
            if ds is not None:
                outputs.append(ds.write(out / "datasets" / f"cell-{c:03d}.jsonl"))
    failed = sum(r is None for r in result.reports)
    _print(f"sweep cells={len(grid.cells())} failed={failed} generations={result.generated} "
           f"elapsed={time.perf_counter() - start:.2f}s -> {out / 'sweep.csv'}")
    write_manifest("sweep", s, outputs)
    return 0 if failed < len(grid.cells()) else 4


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args, load_config(args.config))
        settings["out"].mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](settings)
    except SteerError as exc:
        print(f"steer {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"steer {args.command}: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
