from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maxshapley.core import Method, brute_force_permutation_shapley, full_shapley, max_game_shapley
from maxshapley.errors import (
    DecompositionError,
    DomainError,
    InvalidInputError,
    ScoringError,
    StageError,
)
from maxshapley.judge import MockChatBackend, PlantedChatBackend, PromptedAgent
from maxshapley.judge.backends import ChatBackend, Completion
from maxshapley.pipeline import (
    KeyPointSet,
    MaxSumGame,
    PipelineConfig,
    ValueMatrix,
    aggregate_attribution,
    decompose_keypoints,
    distill_keypoints,
    maxsum_utility,
    run_maxshapley,
    score_relevance_matrix,
)
from maxshapley.sources import Source

from oracles import exact_permutation_shapley


def value_matrices(max_m=6, max_n=5):
    shapes = st.tuples(st.integers(1, max_m), st.integers(1, max_n))
    return shapes.flatmap(lambda s: arrays(float, s, elements=st.floats(0, 1)))


def sum_max_reference(rows, weights):
    rows = [[Fraction(x) for x in r] for r in rows]
    weights = [Fraction(w) for w in weights]

    def u(s):
        if not s:
            return Fraction(0)
        return sum(w * max(rows[i][j] for i in s) for j, w in enumerate(weights))

    return exact_permutation_shapley(u, len(rows))


class TestKeyPointSet:
    def test_uniform(self):
        assert KeyPointSet.uniform(["a", "b", "c", "d"]).weights == (0.25,) * 4

    def test_rejects_empty(self):
        with pytest.raises(Exception):
            KeyPointSet((), ())

    def test_rejects_bad_weights(self):
        with pytest.raises(DomainError):
            KeyPointSet(("a", "b"), (0.7, 0.7))

    def test_rejects_blank_point(self):
        with pytest.raises(InvalidInputError):
            KeyPointSet.uniform(["a", " "])


class TestValueMatrix:
    def test_range_checked(self):
        with pytest.raises(DomainError):
            ValueMatrix.from_rows([[1.2]])

    def test_shape_checked(self):
        with pytest.raises(Exception):
            ValueMatrix(np.zeros((2, 2)), ("a",), KeyPointSet.uniform(["x", "y"]))


class TestDecompose:
    def test_sentence_split(self):
        kps = decompose_keypoints("q", "A. B.", PromptedAgent(MockChatBackend()))
        assert kps.points == ("A", "B")
        assert kps.weights == (0.5, 0.5)

    def test_four_points_uniform(self):
        kps = decompose_keypoints("q", "A. B. C. D.", PromptedAgent(MockChatBackend()))
        assert kps.weights == (0.25, 0.25, 0.25, 0.25)

    def test_empty_answer(self):
        with pytest.raises(InvalidInputError):
            decompose_keypoints("q", "", PromptedAgent(MockChatBackend()))

    def test_zero_points_carries_raw(self):
        class Blank(ChatBackend):
            def complete(self, request):
                return Completion("   \n", 1, 1)

        with pytest.raises(DecompositionError) as info:
            decompose_keypoints("q", "A.", PromptedAgent(Blank()))
        assert info.value.raw == "   \n"


class TestDistill:
    agent = PromptedAgent(MockChatBackend())

    def test_removes_duplicates(self):
        out = distill_keypoints(KeyPointSet.uniform(["X", "X", "Y"]), "q", self.agent)
        assert out.points == ("X", "Y") and out.weights == (0.5, 0.5)

    def test_distinct_unchanged(self):
        kps = KeyPointSet.uniform(["X", "Y", "Z"])
        assert distill_keypoints(kps, "q", self.agent) == kps

    def test_disabled_is_identity(self):
        kps = KeyPointSet.uniform(["X", "X"])
        assert distill_keypoints(kps, "q", self.agent, enabled=False) is kps


class TestScoreRelevance:
    agent = PromptedAgent(MockChatBackend())

    def test_full_overlap(self):
        vm = score_relevance_matrix("q", [Source("s", "red apple")], KeyPointSet.uniform(["red apple"]), self.agent)
        assert vm.scores[0, 0] == 1.0

    def test_disjoint(self):
        vm = score_relevance_matrix("q", [Source("s", "blue sky")], KeyPointSet.uniform(["red apple"]), self.agent)
        assert vm.scores[0, 0] == 0.0

    def test_half_overlap(self):
        kps = KeyPointSet.uniform(["alpha beta gamma delta"])
        vm = score_relevance_matrix("q", [Source("s", "beta and delta")], kps, self.agent)
        assert vm.scores[0, 0] == 0.5

    def test_shuffle_maps_back(self):
        texts = ["one", "two", "three", "four", "five"]
        sources = [Source(f"s{i}", t) for i, t in enumerate(texts)]
        kps = KeyPointSet.uniform(texts)
        for seed in range(5):
            vm = score_relevance_matrix("q", sources, kps, self.agent, shuffle_seed=seed)
            assert np.array_equal(vm.scores, np.eye(5))

    def test_presentation_is_shuffled(self):
        backend = MockChatBackend()
        sources = [Source(f"s{i}", f"t{i}") for i in range(6)]
        score_relevance_matrix("q", sources, KeyPointSet.uniform([f"k{j}" for j in range(6)]),
                               PromptedAgent(backend), shuffle_seed=1)
        orders = {tuple(s.id for s in r.fields["source_list"]) for r in backend.requests}
        assert len(orders) > 1

    def test_parallel_matches_sequential(self):
        rng = np.random.default_rng(0)
        rows = np.round(rng.random((5, 8)), 1)
        points = [f"kp{j}" for j in range(8)]
        backend = PlantedChatBackend({"q": (points, {f"s{i}": rows[i] for i in range(5)})})
        sources = [Source(f"s{i}", "x") for i in range(5)]
        kps = KeyPointSet.uniform(points)
        seq = score_relevance_matrix("q", sources, kps, PromptedAgent(backend), shuffle_seed=4)
        par = score_relevance_matrix("q", sources, kps, PromptedAgent(backend), shuffle_seed=4, parallelism=4)
        assert np.array_equal(seq.scores, rows)
        assert np.array_equal(par.scores, seq.scores)

    def test_scoring_error_names_original_source(self):
        class Partial(MockChatBackend):
            def _stage_relevance(self, f):
                lines = [f"Source {k}: 0.5" for k, s in enumerate(f["source_list"], start=1) if s.id != "s3"]
                return "\n".join(lines)

        sources = [Source(f"s{i}", "x") for i in range(5)]
        with pytest.raises(ScoringError) as info:
            score_relevance_matrix("q", sources, KeyPointSet.uniform(["a", "b"]), PromptedAgent(Partial()),
                                   shuffle_seed=7)
        assert info.value.source_index == 3
        assert info.value.keypoint_index == 0


class TestMaxsumUtility:
    vm = ValueMatrix.from_rows([[1, 0], [0, 1]])

    def test_examples(self):
        assert maxsum_utility(self.vm, [0]) == 0.5
        assert maxsum_utility(self.vm, [0, 1]) == 1.0
        assert maxsum_utility(self.vm, []) == 0.0

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            maxsum_utility(self.vm, [2])


class TestAggregate:
    def test_identity_columns(self):
        assert aggregate_attribution(ValueMatrix.from_rows([[1, 0], [0, 1]])).tolist() == [0.5, 0.5]

    def test_two_player_closed_form(self):
        phi = aggregate_attribution(ValueMatrix.from_rows([[0.8, 0.8], [0.4, 0.4]])).phi
        assert phi == pytest.approx([0.6, 0.2], abs=1e-12)

    def test_single_keypoint_reduction(self):
        col = [0.3, 0.9, 0.1, 0.5]
        vm = ValueMatrix.from_rows([[c] for c in col])
        assert np.allclose(aggregate_attribution(vm).phi, max_game_shapley(col).phi, atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(value_matrices(max_m=5, max_n=3))
    def test_matches_rational_reference(self, scores):
        vm = ValueMatrix(scores, tuple(map(str, range(scores.shape[0]))),
                         KeyPointSet.uniform([f"k{j}" for j in range(scores.shape[1])]))
        ref = sum_max_reference(scores.tolist(), vm.keypoints.weights)
        assert np.allclose(aggregate_attribution(vm).phi, [float(x) for x in ref], atol=1e-9, rtol=0)

    @settings(max_examples=60, deadline=None)
    @given(value_matrices())
    def test_equals_full_shapley_and_efficiency(self, scores):
        vm = ValueMatrix.from_rows(scores)
        phi = aggregate_attribution(vm).phi
        assert np.allclose(phi, full_shapley(MaxSumGame(vm), vm.m).phi, atol=1e-9, rtol=0)
        assert abs(phi.sum() - maxsum_utility(vm, range(vm.m))) <= 1e-9

    @settings(max_examples=60, deadline=None)
    @given(value_matrices(), st.data())
    def test_monotone_dominance(self, scores, data):
        m = scores.shape[0]
        if m < 2:
            return
        i, k = data.draw(st.permutations(range(m)))[:2]
        bump = data.draw(arrays(float, scores.shape[1], elements=st.floats(0, 1)))
        scores = scores.copy()
        scores[i] = np.maximum(scores[k], np.minimum(1.0, scores[k] + bump))
        vm = ValueMatrix.from_rows(scores)
        phi = aggregate_attribution(vm).phi
        ref = brute_force_permutation_shapley(MaxSumGame(vm), m).phi
        assert np.allclose(phi, ref, atol=1e-9)
        assert phi[i] >= phi[k] - 1e-12

    def test_duplicate_source_splits_credit(self):
        rows = [[0.9, 0.2], [0.5, 0.6], [0.1, 0.3]]
        base = aggregate_attribution(ValueMatrix.from_rows(rows)).phi
        dup = aggregate_attribution(ValueMatrix.from_rows(rows + [rows[0]])).phi
        assert abs(dup[0] - dup[3]) <= 1e-12
        assert dup[0] < base[0]

    def test_table_reuse(self):
        from maxshapley.core import build_pair_probability_table

        vm = ValueMatrix.from_rows([[0.2, 0.7], [0.9, 0.1], [0.4, 0.4]])
        with_table = aggregate_attribution(vm, build_pair_probability_table(3)).phi
        assert np.allclose(with_table, aggregate_attribution(vm).phi, atol=1e-15)


def _planted(rows, points=("kp one", "kp two")):
    sources = [Source(f"s{i}", f"text {i}") for i in range(len(rows))]
    backend = PlantedChatBackend({"q": (list(points), {s.id: r for s, r in zip(sources, rows)})})
    return sources, backend


class TestRunMaxShapley:
    def test_identity_matrix(self):
        sources, backend = _planted([[1, 0], [0, 1]])
        res = run_maxshapley("q", sources, PromptedAgent(backend), answer="anything")
        assert res.attribution.tolist() == [0.5, 0.5]
        assert res.attribution.method == Method.MAXSHAPLEY
        assert res.ledger.tokens_in > 0 and res.ledger.tokens_out > 0

    def test_call_count_is_linear_in_keypoints(self):
        sources, backend = _planted([[1, 0, 0.5], [0, 1, 0.5]], points=("a", "b", "c"))
        res = run_maxshapley("q", sources, PromptedAgent(backend), answer="x")
        assert res.ledger.calls == 2 + 3
        assert {k: v.calls for k, v in res.ledger.by_stage.items()} == {"keypoints": 1, "distill": 1, "relevance": 3}
        nodistill = run_maxshapley("q", sources, PromptedAgent(backend), answer="x",
                                   config=PipelineConfig(distill=False))
        assert nodistill.ledger.calls == 1 + 3

    def test_empty_sources(self):
        with pytest.raises(InvalidInputError):
            run_maxshapley("q", [], PromptedAgent(MockChatBackend()), answer="a")

    def test_clipping_composition(self):
        rows = [[0.9], [0.04], [0.06]]
        sources, backend = _planted(rows, points=("p",))
        res = run_maxshapley("q", sources, PromptedAgent(backend), answer="x",
                             config=PipelineConfig(clip=True, clipping_threshold=0.05))
        raw = aggregate_attribution(ValueMatrix.from_rows(rows)).phi
        assert res.unclipped.tolist() == raw.tolist()
        kept = np.where(raw < 0.05, 0, raw)
        assert np.allclose(res.attribution.phi, kept / kept.sum(), atol=1e-15)
        assert res.attribution.clipped

    def test_stage_error_names_stage(self):
        class NoPoints(MockChatBackend):
            def _stage_keypoints(self, f):
                return ""

        with pytest.raises(StageError) as info:
            run_maxshapley("q", [Source("s", "t")], PromptedAgent(NoPoints()), answer="a")
        assert info.value.stage == "decompose"
        assert isinstance(info.value.cause, DecompositionError)
        assert info.value.exit_code == 3

    def test_distillation_fallback_flag(self):
        class DropAll(MockChatBackend):
            def _stage_distill(self, f):
                return ""

        res = run_maxshapley("q", [Source("s", "a b")], PromptedAgent(DropAll()), answer="a. b.")
        assert res.value_matrix.keypoints.points == ("a", "b")
        assert "distillation_fallback" in res.flags

    def test_keypoint_cap(self):
        answer = ". ".join(f"point {k}" for k in range(10))
        res = run_maxshapley("q", [Source("s", "point")], PromptedAgent(MockChatBackend()), answer=answer,
                             config=PipelineConfig(keypoint_cap=4, distill=False))
        assert len(res.value_matrix.keypoints) == 4
        assert "keypoints_truncated" in res.flags

    def test_generates_answer_when_absent(self):
        backend = MockChatBackend()
        sources = [Source("a", "red apple"), Source("b", "green pear")]
        res = run_maxshapley("q", sources, PromptedAgent(backend), config=PipelineConfig(shuffle_seed=2))
        assert res.answer.startswith("q|")
        assert res.answer_ledger.calls == 1
        assert "answer" not in res.ledger.by_stage
        assert res.attribution.total == pytest.approx(maxsum_utility(res.value_matrix, [0, 1]), abs=1e-9)

    def test_ground_truth_never_in_prompts(self):
        backend = MockChatBackend()
        run_maxshapley("q", [Source("a", "red apple")], PromptedAgent(backend), answer="red apple")
        assert all("GROUND-TRUTH" not in r.prompt for r in backend.requests)
        assert all("ground_truth" not in r.fields for r in backend.requests)

    def test_shuffle_seed_does_not_change_math(self):
        sources, backend = _planted([[0.2, 0.9], [0.7, 0.3], [0.5, 0.5]])
        results = [run_maxshapley("q", sources, PromptedAgent(backend), answer="x",
                                  config=PipelineConfig(shuffle_seed=s)).attribution.tolist() for s in range(4)]
        assert all(r == results[0] for r in results)

    def test_record_fields(self):
        sources, backend = _planted([[1, 0], [0, 1]])
        rec = run_maxshapley("q", sources, PromptedAgent(backend), answer="x", query_id="q7").to_record()
        assert set(rec) == {"query_id", "method", "phi", "value_matrix", "keypoints", "weights",
                            "tokens_in", "tokens_out", "seed"}
        assert rec["query_id"] == "q7" and rec["value_matrix"] == [[1.0, 0.0], [0.0, 1.0]]
