"""Dataset records, JSONL persistence and corpus ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from ._io import atomic_write_text
from .errors import MalformedRecord, SteerIOError, ValidationError

SEPARATOR = "\n###\n"
_SEPARATOR_ESCAPED = "\n##\\#\n"
KINDS = ("real", "synthetic")
FORMATS = ("lines", "jsonl")


def escape_separator(text: str) -> str:
    """Rewrite every occurrence of the negative-prompt separator.

    Repeated until none is left, since removing one match can expose another
    that shared its newline.
    """
    while SEPARATOR in text:
        text = text.replace(SEPARATOR, _SEPARATOR_ESCAPED)
    return text


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    text: str
    label: str | None = None
    meta: dict | None = None

    def to_json(self) -> str:
        d = {"id": self.id, "text": self.text}
        if self.label is not None:
            d["label"] = self.label
        if self.meta is not None:
            d["meta"] = self.meta
        return json.dumps(d, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass
class Dataset:
    records: list[DatasetRecord] = field(default_factory=list)
    kind: str = "real"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ValidationError(f"duplicate record id {r.id!r}")
            seen.add(r.id)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[DatasetRecord]:
        return iter(self.records)

    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    def labels(self) -> list[str | None]:
        return [r.label for r in self.records]

    def by_id(self) -> dict[str, DatasetRecord]:
        return {r.id: r for r in self.records}

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def write(self, path) -> Path:
        return atomic_write_text(path, self.to_jsonl())

    @classmethod
    def read(cls, path) -> "Dataset":
        """Read a file written by :meth:`write`, keeping ids and metadata."""
        records = list(_iter_jsonl(path, keep_ids=True))
        kind = "synthetic" if records and all(r.meta is not None for r in records) else "real"
        return cls(records, kind)


def _read_lines(path) -> list[tuple[int, bytes]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise SteerIOError(f"cannot read {path}: {exc}") from exc
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    return [(i + 1, line[:-1] if line.endswith(b"\r") else line) for i, line in enumerate(lines)]


def _decode(lineno, line):
    try:
        return line.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRecord(lineno, f"invalid UTF-8 ({exc.reason})") from exc


def _clean_text(text: str) -> str:
    return escape_separator(text.replace("\r\n", "\n"))


def _iter_jsonl(path, keep_ids=False) -> Iterable[DatasetRecord]:
    index = 0
    for lineno, line in _read_lines(path):
        s = _decode(lineno, line)
        if not s.strip():
            continue
        try:
            obj = json.loads(s)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(lineno, "record is not a JSON object")
        text = obj.get("text")
        if not isinstance(text, str):
            raise MalformedRecord(lineno, 'missing or non-string "text" field')
        label = obj.get("label")
        if label is not None and not isinstance(label, str):
            raise MalformedRecord(lineno, '"label" must be a string')
        meta = obj.get("meta") if keep_ids else None
        if meta is not None and not isinstance(meta, dict):
            raise MalformedRecord(lineno, '"meta" must be an object')
        rid = obj.get("id") if keep_ids else None
        if rid is None:
            rid = f"{index:06d}"
        elif not isinstance(rid, str):
            raise MalformedRecord(lineno, '"id" must be a string')
        yield DatasetRecord(rid, _clean_text(text), label, meta)
        index += 1


def ingest_dataset(path, format: str | None = None) -> Dataset:
    """Load a raw corpus as a real dataset with ids ``000000``, ``000001``, ...

    ``lines``: one example per non-blank line. ``jsonl``: objects with a
    ``text`` string and an optional ``label`` string; blank lines are skipped.
    The format defaults to ``jsonl`` for ``.jsonl`` files and ``lines`` otherwise.
    """
    if format is None:
        format = "jsonl" if str(path).endswith(".jsonl") else "lines"
    if format not in FORMATS:
        raise ValidationError(f"unknown corpus format {format!r}")
    if format == "jsonl":
        return Dataset(list(_iter_jsonl(path)), "real")
    records = []
    for lineno, line in _read_lines(path):
        s = _decode(lineno, line)
        if not s.strip():
            continue
        records.append(DatasetRecord(f"{len(records):06d}", _clean_text(s)))
    return Dataset(records, "real")
