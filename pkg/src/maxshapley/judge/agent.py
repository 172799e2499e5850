"""Prompt-driven model calls: answer generation, judging, keypoints, relevance.

:class:`PromptedAgent` renders a template, sends it to any
:class:`~maxshapley.judge.backends.ChatBackend` and parses the completion.
Each call is booked in the agent's ledger under its stage name.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

from maxshapley.errors import EmptyAnswerError, InvalidInputError
from maxshapley.judge.backends import ChatBackend, ChatRequest, Completion
from maxshapley.judge.parsing import parse_judge_score, parse_list, parse_relevance
from maxshapley.judge.prompts import PromptTemplates, format_keypoints, format_sources
from maxshapley.ledger import TokenLedger
from maxshapley.sources import Source


@dataclass(frozen=True)
class Answer:
    text: str
    tokens_in: int
    tokens_out: int
    no_context: bool = False


class PromptedAgent:
    def __init__(self, backend: ChatBackend, templates: PromptTemplates | None = None,
                 ledger: TokenLedger | None = None):
        self.backend = backend
        self.templates = templates or PromptTemplates()
        self.ledger = ledger if ledger is not None else TokenLedger()

    def with_ledger(self, ledger: TokenLedger) -> "PromptedAgent":
        clone = copy.copy(self)
        clone.ledger = ledger
        return clone

    def _call(self, stage: str, template_id: str, fields: dict, **structured) -> Completion:
        prompt = self.templates.render(template_id, **fields)
        completion = self.backend.complete(ChatRequest(stage, prompt, {**fields, **structured}))
        self.ledger.record(stage, completion.tokens_in, completion.tokens_out)
        return completion

    def generate_answer(self, query: str, sources: Sequence[Source], stage: str = "answer") -> Answer:
        """Answer ``query`` from ``sources`` in the order given."""
        completion = self._call(stage, "answer", {"query": query, "sources": format_sources(sources)},
                                source_list=list(sources))
        if not completion.text.strip():
            raise EmptyAnswerError(f"search model returned an empty answer for {query!r}")
        return Answer(completion.text.strip(), completion.tokens_in, completion.tokens_out, no_context=not sources)

    def judge(self, query: str, answer: str, ground_truth: str | None = None,
              sources: Sequence[Source] = (), template_id: str | None = None) -> float:
        """Score ``answer`` in [0, 1]; the reference answer is shown only if given."""
        if not answer.strip():
            raise InvalidInputError("cannot judge an empty answer")
        fields = {"query": query, "answer": answer, "sources": format_sources(sources)}
        if ground_truth is not None:
            fields["ground_truth"] = ground_truth
        template_id = template_id or ("judge_reference" if ground_truth is not None else "judge")
        completion = self._call("judge", template_id, fields, source_list=list(sources))
        return parse_judge_score(completion.text)

    def decompose(self, query: str, answer: str) -> tuple[list[str], str]:
        """Keypoints of ``answer`` plus the raw completion."""
        completion = self._call("keypoints", "keypoints", {"query": query, "answer": answer})
        return parse_list(completion.text), completion.text

    def distill(self, query: str, points: Sequence[str]) -> list[str]:
        completion = self._call("distill", "distill", {"query": query, "keypoints": format_keypoints(points)},
                                keypoint_list=list(points))
        return parse_list(completion.text)

    def score_relevance(self, query: str, keypoint: str, sources: Sequence[Source],
                        keypoint_index: int | None = None) -> list[float]:
        """One score per source, in the order the sources were presented."""
        completion = self._call("relevance", "relevance",
                                {"query": query, "keypoint": keypoint, "sources": format_sources(sources)},
                                source_list=list(sources))
        return parse_relevance(completion.text, len(sources), keypoint_index)


def generate_answer(query: str, sources: Sequence[Source], agent: PromptedAgent) -> Answer:
    return agent.generate_answer(query, sources)


def judge_utility(query: str, answer: str, ground_truth: str | None, agent: PromptedAgent,
                  template_id: str | None = None, sources: Sequence[Source] = ()) -> float:
    return agent.judge(query, answer, ground_truth, sources=sources, template_id=template_id)
