"""Annotated query/source datasets stored as JSONL."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from maxshapley.errors import DomainError, SchemaError
from maxshapley.sources import Source

logger = logging.getLogger(__name__)

SCHEMAS = ("binary", "graded")
REQUIRED = ("query_id", "query", "sources")


@dataclass(frozen=True)
class AnnotatedSample:
    query_id: str
    query: str
    sources: tuple[Source, ...]
    relevance: tuple[int, ...]
    reference_answer: str | None = None
    graded_relevance: tuple[int, ...] | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return len(self.sources)

    @property
    def k(self) -> int:
        """Number of sources labelled relevant."""
        return sum(self.relevance)

    def to_dict(self) -> dict:
        d = {"query_id": self.query_id, "query": self.query,
             "sources": [s.to_dict() for s in self.sources], "relevance": list(self.relevance)}
        if self.graded_relevance is not None:
            d["graded_relevance"] = list(self.graded_relevance)
        if self.reference_answer is not None:
            d["reference_answer"] = self.reference_answer
        return d


def binarize_graded_relevance(grades: Sequence[int], threshold: int = 2) -> list[int]:
    """1 where the 0-3 grade reaches ``threshold``, else 0."""
    out = []
    for g in grades:
        if isinstance(g, bool) or g not in (0, 1, 2, 3):
            raise DomainError(f"graded relevance must be an integer in 0..3, got {g!r}")
        out.append(int(g >= threshold))
    return out


def _labels(value, name: str, m: int, allowed, lineno: int | None) -> tuple[int, ...]:
    if not isinstance(value, list) or len(value) != m:
        raise SchemaError(f"'{name}' must be a list with one entry per source ({m})", line=lineno)
    if any(isinstance(v, bool) or v not in allowed for v in value):
        raise SchemaError(f"'{name}' entries must be in {sorted(allowed)}", line=lineno)
    return tuple(int(v) for v in value)


def parse_sample(rec: dict, lineno: int | None = None, schema: str = "binary", threshold: int = 2) -> AnnotatedSample:
    if not isinstance(rec, dict):
        raise SchemaError("each line must be a JSON object", line=lineno)
    for key in REQUIRED:
        if key not in rec:
            raise SchemaError(f"missing required field '{key}'", line=lineno)
    raw_sources = rec["sources"]
    if not isinstance(raw_sources, list) or not raw_sources:
        raise SchemaError("'sources' must be a non-empty list", line=lineno)
    try:
        sources = tuple(Source.from_dict(s) for s in raw_sources)
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed source entry: missing {exc}", line=lineno) from exc
    ids = [s.id for s in sources]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise SchemaError(f"duplicate source id {dup!r}", line=lineno)
    m = len(sources)
    graded = None
    if rec.get("graded_relevance") is not None:
        graded = _labels(rec["graded_relevance"], "graded_relevance", m, {0, 1, 2, 3}, lineno)
    if "relevance" in rec:
        relevance = _labels(rec["relevance"], "relevance", m, {0, 1}, lineno)
    elif schema == "graded" and graded is not None:
        relevance = tuple(binarize_graded_relevance(graded, threshold))
    else:
        raise SchemaError("missing required field 'relevance'", line=lineno)
    ref = rec.get("reference_answer")
    known = {"query_id", "query", "sources", "relevance", "graded_relevance", "reference_answer"}
    return AnnotatedSample(str(rec["query_id"]), str(rec["query"]), sources, relevance,
                           None if ref is None else str(ref), graded,
                           {k: v for k, v in rec.items() if k not in known})


def load_dataset(path: str | Path, schema: str = "binary", threshold: int = 2) -> list[AnnotatedSample]:
    """Read one sample per non-blank line, preserving source order.

    ``schema="graded"`` derives binary labels from ``graded_relevance`` when a
    line has no ``relevance`` field.

    Raises:
        SchemaError: malformed JSON, missing field, duplicate source or query id;
            the message carries the line number.
    """
    if schema not in SCHEMAS:
        raise SchemaError(f"unknown dataset schema {schema!r}; expected one of {SCHEMAS}")
    path = Path(path)
    samples: list[AnnotatedSample] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            sample = parse_sample(rec, lineno, schema, threshold)
            if sample.query_id in seen:
                raise SchemaError(f"duplicate query_id {sample.query_id!r}", line=lineno)
            seen.add(sample.query_id)
            samples.append(sample)
    if not samples:
        logger.warning("dataset %s contains no samples", path)
    return samples
