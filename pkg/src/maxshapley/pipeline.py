"""Keypoint-level attribution: decompose, score, solve max games, aggregate.

The answer is split into keypoints, every source is scored against every
keypoint, and the resulting value matrix defines a sum of max games. Shapley
values are additive, so solving each keypoint column in closed form and
summing the weighted results gives the exact Shapley values of the whole
sum-max utility.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from maxshapley.core.clipping import clip_and_renormalize
from maxshapley.core.games import AttributionVector, Coalition, Method, UtilityOracle, canonical
from maxshapley.core.maxgame import PairProbabilityTable, build_pair_probability_table, max_game_shapley
from maxshapley.errors import (
    DecompositionError,
    DistillationError,
    DomainError,
    InvalidInputError,
    InvalidSizeError,
    ScoringError,
    StageError,
)
from maxshapley.judge.agent import PromptedAgent
from maxshapley.ledger import TokenLedger
from maxshapley.seeding import derive_seed
from maxshapley.sources import Source

logger = logging.getLogger(__name__)

KEYPOINT_CAP = 32
WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class KeyPointSet:
    points: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.points:
            raise InvalidSizeError("a keypoint set needs at least one keypoint")
        if len(self.points) != len(self.weights):
            raise InvalidSizeError(f"{len(self.points)} keypoints but {len(self.weights)} weights")
        if any(not p.strip() for p in self.points):
            raise InvalidInputError("keypoints must be non-empty strings")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > WEIGHT_TOL:
            raise DomainError(f"keypoint weights must be non-negative and sum to 1, got {self.weights}")

    @classmethod
    def uniform(cls, points: Sequence[str]) -> "KeyPointSet":
        n = len(points)
        return cls(tuple(points), (1.0 / n,) * n if n else ())

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ValueMatrix:
    """Relevance scores ``scores[i, j]`` of source ``i`` for keypoint ``j``."""

    scores: np.ndarray
    source_ids: tuple[str, ...]
    keypoints: KeyPointSet

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        if scores.ndim != 2 or scores.shape != (len(self.source_ids), len(self.keypoints)):
            raise InvalidSizeError(
                f"value matrix shape {scores.shape} does not match "
                f"{len(self.source_ids)} sources x {len(self.keypoints)} keypoints"
            )
        if not np.all((scores >= 0) & (scores <= 1)):
            raise DomainError("value matrix entries must lie in [0, 1]")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "source_ids", tuple(self.source_ids))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], weights: Sequence[float] | None = None,
                  source_ids: Sequence[str] | None = None, points: Sequence[str] | None = None) -> "ValueMatrix":
        """Convenience constructor for synthetic matrices; defaults to uniform weights."""
        scores = np.asarray(rows, dtype=float)
        m, n = scores.shape
        points = tuple(points) if points is not None else tuple(f"keypoint {j + 1}" for j in range(n))
        kps = KeyPointSet(points, weights) if weights is not None else KeyPointSet.uniform(points)
        ids = tuple(source_ids) if source_ids is not None else tuple(str(i) for i in range(m))
        return cls(scores, ids, kps)

    @property
    def m(self) -> int:
        return self.scores.shape[0]

    @property
    def n(self) -> int:
        return self.scores.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.keypoints.weights)


# -- stages ---------------------------------------------------------------------


def decompose_keypoints(query: str, answer: str, agent: PromptedAgent) -> KeyPointSet:
    """Split ``answer`` into keypoints with uniform weights (one oracle call)."""
    if not answer or not answer.strip():
        raise InvalidInputError("cannot decompose an empty answer")
    points, raw = agent.decompose(query, answer)
    points = [p.strip() for p in points if p.strip()]
    if not points:
        raise DecompositionError("attribution model returned no keypoints", raw=raw)
    return KeyPointSet.uniform(points)


def distill_keypoints(kps: KeyPointSet, query: str, agent: PromptedAgent, enabled: bool = True) -> KeyPointSet:
    """Drop redundant keypoints through the attribution model; identity when disabled.

    Raises:
        DistillationError: the model kept nothing, or returned more points
            than it was given.
    """
    if not enabled:
        return kps
    kept = [p.strip() for p in agent.distill(query, kps.points) if p.strip()]
    if not kept:
        raise DistillationError("distillation removed every keypoint")
    if len(kept) > len(kps):
        raise DistillationError(f"distillation returned {len(kept)} keypoints from {len(kps)}")
    return KeyPointSet.uniform(kept)


def presentation_order(m: int, shuffle_seed: int, keypoint_index: int, shuffle: bool = True) -> np.ndarray:
    """Order in which sources are shown when scoring one keypoint."""
    if not shuffle:
        return np.arange(m)
    return np.random.default_rng(derive_seed(shuffle_seed, "relevance", keypoint_index)).permutation(m)


def score_relevance_matrix(query: str, sources: Sequence[Source], kps: KeyPointSet, agent: PromptedAgent,
                           shuffle_seed: int = 0, parallelism: int = 1, shuffle: bool = True) -> ValueMatrix:
    """One relevance call per keypoint, sources shuffled per call and mapped back.

    The matrix is assembled by (source, keypoint) index, so it is identical for
    any ``parallelism``.
    """
    m, n = len(sources), len(kps)
    if m < 1:
        raise InvalidInputError("no sources to score")

    def row(j: int) -> tuple[int, np.ndarray, np.ndarray]:
        order = presentation_order(m, shuffle_seed, j, shuffle)
        try:
            scores = agent.score_relevance(query, kps.points[j], [sources[i] for i in order], keypoint_index=j)
        except ScoringError as exc:
            original = int(order[exc.source_index]) if exc.source_index is not None else None
            raise ScoringError(f"relevance of source {original} for keypoint {j}: {exc}",
                               source_index=original, keypoint_index=j) from exc
        return j, order, np.asarray(scores, dtype=float)

    matrix = np.zeros((m, n))
    if parallelism > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(row, range(n)))
    else:
        results = [row(j) for j in range(n)]
    for j, order, scores in results:
        matrix[order, j] = scores
    return ValueMatrix(np.clip(matrix, 0.0, 1.0), tuple(s.id for s in sources), kps)


def maxsum_utility(vm: ValueMatrix, coalition: Iterable[int]) -> float:
    """Weighted sum over keypoints of the best member score; 0 for the empty coalition."""
    members = canonical(coalition, vm.m)
    if not members:
        return 0.0
    return float(vm.weights @ vm.scores[list(members)].max(axis=0))


class MaxSumGame(UtilityOracle):
    """The sum-max utility of a fixed value matrix as a coalition oracle."""

    def __init__(self, vm: ValueMatrix):
        super().__init__(vm.m)
        self.vm = vm

    def _evaluate(self, coalition: Coalition) -> float:
        return maxsum_utility(self.vm, coalition)


@functools.lru_cache(maxsize=64)
def shared_table(m: int) -> PairProbabilityTable:
    return build_pair_probability_table(m)


def aggregate_attribution(vm: ValueMatrix, table: PairProbabilityTable | None = None) -> AttributionVector:
    """Weighted sum of the per-keypoint max-game Shapley values."""
    table = table if table is not None else shared_table(vm.m)
    phi = np.zeros(vm.m)
    for j, w in enumerate(vm.keypoints.weights):
        phi += w * max_game_shapley(vm.scores[:, j], table).phi
    return AttributionVector(phi=phi, method=Method.MAXSHAPLEY)


# -- end to end -----------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    distill: bool = True
    clip: bool = False
    clipping_threshold: float = 0.05
    parallelism: int = 1
    shuffle_seed: int = 0
    shuffle: bool = True
    keypoint_cap: int = KEYPOINT_CAP

    def __post_init__(self):
        if self.parallelism < 1:
            raise InvalidInputError("parallelism must be >= 1")
        if not 1 <= self.keypoint_cap <= KEYPOINT_CAP:
            raise InvalidInputError(f"keypoint_cap must lie in [1, {KEYPOINT_CAP}]")
        if self.clipping_threshold < 0:
            raise InvalidInputError("clipping_threshold must be >= 0")


@dataclass
class AttributionResult:
    attribution: AttributionVector
    value_matrix: ValueMatrix
    answer: str
    ledger: TokenLedger
    shuffle_seed: int
    query_id: str = ""
    answer_ledger: TokenLedger = field(default_factory=TokenLedger)
    flags: tuple[str, ...] = ()
    unclipped: AttributionVector | None = None

    def to_record(self) -> dict:
        vm = self.value_matrix
        return {
            "query_id": self.query_id,
            "method": self.attribution.method.value,
            "phi": self.attribution.tolist(),
            "value_matrix": vm.scores.tolist(),
            "keypoints": list(vm.keypoints.points),
            "weights": list(vm.keypoints.weights),
            "tokens_in": self.ledger.tokens_in,
            "tokens_out": self.ledger.tokens_out,
            "seed": self.shuffle_seed,
        }


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_maxshapley(query: str, sources: Sequence[Source], agent: PromptedAgent, answer: str | None = None,
                   search: PromptedAgent | None = None, config: PipelineConfig | None = None,
                   query_id: str = "") -> AttributionResult:
    """Attribute ``answer`` (generated from all sources if absent) to ``sources``.

    Attribution-model calls go to the result's ``ledger``: one decomposition,
    one distillation when enabled, and one relevance call per keypoint. The
    optional answer-generation call is booked separately in ``answer_ledger``.
    The reference answer is never part of any prompt issued here.
    """
    config = config or PipelineConfig()
    if not sources:
        raise InvalidInputError("cannot attribute over an empty source list")
    ledger, answer_ledger = TokenLedger(), TokenLedger()
    attribution = agent.with_ledger(ledger)
    flags: list[str] = []

    if answer is None:
        generator = (search or agent).with_ledger(answer_ledger)
        order = np.random.default_rng(derive_seed(config.shuffle_seed, "answer")).permutation(len(sources))
        shown = [sources[i] for i in order] if config.shuffle else list(sources)
        answer = _stage("answer", generator.generate_answer, query, shown).text

    kps = _stage("decompose", decompose_keypoints, query, answer, attribution)
    if len(kps) > config.keypoint_cap:
        logger.warning("truncating %d keypoints to the cap of %d", len(kps), config.keypoint_cap)
        kps = KeyPointSet.uniform(kps.points[: config.keypoint_cap])
        flags.append("keypoints_truncated")
    if config.distill:
        try:
            kps = distill_keypoints(kps, query, attribution, enabled=True)
        except DistillationError as exc:
            logger.warning("distillation failed, keeping %d undistilled keypoints: %s", len(kps), exc)
            flags.append("distillation_fallback")
        except Exception as exc:
            raise StageError("distill", exc) from exc

    vm = _stage("score", score_relevance_matrix, query, sources, kps, attribution,
                shuffle_seed=config.shuffle_seed, parallelism=config.parallelism, shuffle=config.shuffle)
    raw = _stage("aggregate", aggregate_attribution, vm)
    raw = dataclasses.replace(raw, seed=config.shuffle_seed, oracle_calls=ledger.calls)
    final = _stage("clip", clip_and_renormalize, raw, config.clipping_threshold) if config.clip else raw
    return AttributionResult(final, vm, answer, ledger, config.shuffle_seed, query_id=query_id,
                             answer_ledger=answer_ledger, flags=tuple(flags), unclipped=raw)
