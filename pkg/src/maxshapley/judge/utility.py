"""Judge-based utility: answer from a coalition of sources, then grade it."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from maxshapley.core.games import Coalition, UtilityOracle
from maxshapley.errors import InvalidInputError
from maxshapley.judge.agent import PromptedAgent
from maxshapley.seeding import derive_seed
from maxshapley.sources import Source


class JudgeUtility(UtilityOracle):
    """U(S') = judge score of the answer the search model gives from S'.

    Sources in a coalition are presented in a shuffled order derived from
    ``seed`` and the sorted member set, so a given set always yields the same
    prompt regardless of how the caller ordered it.

    Args:
        query: the user question.
        sources: the full source list; coalitions index into it.
        search: agent that generates coalition answers.
        judge: agent that grades them; defaults to ``search``.
        ground_truth: reference answer shown to the judge, if any.
        seed: shuffle seed.
        empty_value: constant U(empty); ``None`` queries the answer pipeline
            with zero sources instead.
        shuffle: present sources in shuffled rather than index order.
    """

    def __init__(self, query: str, sources: Sequence[Source], search: PromptedAgent,
                 judge: PromptedAgent | None = None, ground_truth: str | None = None, seed: int = 0,
                 empty_value: float | None = None, shuffle: bool = True):
        if not sources:
            raise InvalidInputError("judge utility needs at least one source")
        super().__init__(len(sources))
        self.query = query
        self.sources = list(sources)
        self.ground_truth = ground_truth
        self.seed = seed
        self.empty_value = empty_value
        self.shuffle = shuffle
        self.search = search.with_ledger(self.ledger)
        self.judge = (judge or search).with_ledger(self.ledger)

    def presentation_order(self, coalition: Coalition) -> list[int]:
        members = sorted(coalition)
        if self.shuffle and len(members) > 1:
            rng = np.random.default_rng(derive_seed(self.seed, *members))
            members = [members[k] for k in rng.permutation(len(members))]
        return members

    def _evaluate(self, coalition: Coalition) -> float:
        if not coalition and self.empty_value is not None:
            return float(self.empty_value)
        presented = [self.sources[i] for i in self.presentation_order(coalition)]
        answer = self.search.generate_answer(self.query, presented, stage="coalition_answer")
        return self.judge.judge(self.query, answer.text, self.ground_truth, sources=presented)
