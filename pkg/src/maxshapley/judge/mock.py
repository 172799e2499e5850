"""Deterministic offline chat backends.

The mocks read the structured template fields of each request and answer in
the same text format a real model is asked for, so the parsing path is the
one used in production. Token usage is the word count of prompt and
completion.
"""

from __future__ import annotations

import re
import threading
from typing import Mapping, Sequence

import numpy as np

from maxshapley.judge.backends import ChatBackend, ChatRequest, Completion, word_count

_TERM = re.compile(r"\w+")
_SENTENCE_SPLIT = re.compile(r"[.!?\n|]+")
NO_ANSWER = "The sources are insufficient to answer."
STOPWORDS = frozenset(
    "a an and are as at be by did do does for from had has have how in is it its of on or that the "
    "to was were what when where which who whom why with".split()
)


def terms(text: str) -> set[str]:
    """Lower-cased content words (a short stopword list is dropped)."""
    return set(_TERM.findall(text.lower())) - STOPWORDS


def fmt_score(x: float) -> str:
    """Shortest positional representation that round-trips the float."""
    return np.format_float_positional(float(x), trim="-")


def normalize(text: str) -> str:
    return " ".join(text.lower().split()).strip(" .;:,")


def overlap_score(keypoint: str, source_text: str) -> float:
    """Fraction of the keypoint's distinct terms that occur in the source."""
    kp = terms(keypoint)
    if not kp:
        return 0.0
    return len(kp & terms(source_text)) / len(kp)


class MockChatBackend(ChatBackend):
    """Rule-based stand-in for both the search model and the attribution model.

    Args:
        answer_mode: ``"concat"`` answers ``query|text1|text2...``;
            ``"extractive"`` answers with the source sentences that share at
            least ``min_overlap`` terms with the query.
        gold_facts: optional mapping query -> facts for the judge; otherwise
            facts are the ``;``-separated parts of the reference answer.
        record_requests: keep every request in :attr:`requests` for inspection.
    """

    def __init__(self, answer_mode: str = "concat", gold_facts: Mapping[str, Sequence[str]] | None = None,
                 min_overlap: int = 2, record_requests: bool = True):
        if answer_mode not in ("concat", "extractive"):
            raise ValueError(f"unknown answer_mode {answer_mode!r}")
        self.answer_mode = answer_mode
        self.gold_facts = dict(gold_facts or {})
        self.min_overlap = min_overlap
        self.record_requests = record_requests
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> Completion:
        if self.record_requests:
            with self._lock:
                self.requests.append(request)
        handler = getattr(self, f"_stage_{request.stage}", None)
        if handler is None:
            raise ValueError(f"mock backend has no rule for stage {request.stage!r}")
        text = handler(request.fields)
        return Completion(text, word_count(request.prompt), word_count(text))

    # -- stages ---------------------------------------------------------------

    def _stage_answer(self, f) -> str:
        sources = f["source_list"]
        if self.answer_mode == "concat":
            return f["query"] + "|" + "|".join(s.text for s in sources)
        query_terms = terms(f["query"])
        picked = []
        for src in sources:
            for sentence in _SENTENCE_SPLIT.split(src.text):
                sentence = sentence.strip()
                if sentence and len(terms(sentence) & query_terms) >= self.min_overlap:
                    picked.append(sentence + ".")
        return " ".join(picked) if picked else NO_ANSWER

    _stage_coalition_answer = _stage_answer

    def _facts(self, f) -> list[str]:
        if f["query"] in self.gold_facts:
            return list(self.gold_facts[f["query"]])
        truth = f.get("ground_truth") or ""
        return [part.strip() for part in truth.split(";") if part.strip()]

    def _stage_judge(self, f) -> str:
        facts = self._facts(f)
        answer = normalize(f["answer"])
        hit = sum(1 for fact in facts if normalize(fact) in answer)
        score = hit / len(facts) if facts else 0.0
        return f"{hit} of {len(facts)} reference facts present.\nScore: {fmt_score(score)}"

    def _stage_keypoints(self, f) -> str:
        parts = [p.strip() for p in _SENTENCE_SPLIT.split(f["answer"]) if p.strip()]
        return "\n".join(f"{k}. {p}" for k, p in enumerate(parts, start=1))

    def _stage_distill(self, f) -> str:
        seen: set[str] = set()
        kept = []
        for point in f["keypoint_list"]:
            key = normalize(point)
            if key not in seen:
                seen.add(key)
                kept.append(point)
        return "\n".join(f"{k}. {p}" for k, p in enumerate(kept, start=1))

    def relevance(self, keypoint: str, source) -> float:
        return overlap_score(keypoint, source.text)

    def _stage_relevance(self, f) -> str:
        return "\n".join(
            f"Source {label}: {fmt_score(self.relevance(f['keypoint'], src))}"
            for label, src in enumerate(f["source_list"], start=1)
        )


class PlantedChatBackend(MockChatBackend):
    """Mock whose keypoints and relevance scores come from a planted matrix.

    Args:
        planted: mapping query -> ``(keypoints, {source_id: [v_1..v_n]})``.
    """

    def __init__(self, planted: Mapping[str, tuple[Sequence[str], Mapping[str, Sequence[float]]]], **kwargs):
        super().__init__(**kwargs)
        self.planted = {q: (list(kps), {sid: list(row) for sid, row in rows.items()})
                        for q, (kps, rows) in planted.items()}

    def _stage_keypoints(self, f) -> str:
        points, _ = self.planted[f["query"]]
        return "\n".join(f"{k}. {p}" for k, p in enumerate(points, start=1))

    def _stage_relevance(self, f) -> str:
        points, rows = self.planted[f["query"]]
        j = points.index(f["keypoint"])
        return "\n".join(
            f"Source {label}: {fmt_score(rows[src.id][j])}"
            for label, src in enumerate(f["source_list"], start=1)
        )
