import numpy as np
import pytest

from maxshapley.core import (
    AdditiveGame,
    ConstantGame,
    FunctionGame,
    MaxGame,
    SumGame,
    brute_force_permutation_shapley,
    full_shapley,
    leave_one_out,
    max_game_shapley,
)
from maxshapley.errors import CapExceededError, OracleEvaluationError


class CountingGame(MaxGame):
    """Max game that remembers every coalition it was asked about."""

    def __init__(self, values):
        super().__init__(values)
        self.requests = []

    def _evaluate(self, coalition):
        self.requests.append(coalition)
        return super()._evaluate(coalition)


def random_game(rng, m):
    table = rng.uniform(0, 1, size=1 << m)
    table[0] = 0.0
    return FunctionGame(m, lambda c: table[sum(1 << i for i in c)])


class TestBruteForce:
    def test_constant(self):
        assert brute_force_permutation_shapley(ConstantGame(3, 0.4), 3).tolist() == [0, 0, 0]

    def test_max_game(self):
        np.testing.assert_allclose(
            brute_force_permutation_shapley(MaxGame([1, 2, 3]), 3).phi, [1 / 3, 5 / 6, 11 / 6], atol=1e-12
        )

    def test_additive(self):
        np.testing.assert_allclose(brute_force_permutation_shapley(AdditiveGame([0.2, 0.3]), 2).phi, [0.2, 0.3])

    def test_cap(self):
        with pytest.raises(CapExceededError, match="cap of 8"):
            brute_force_permutation_shapley(ConstantGame(9, 0), 9)

    def test_cap_override(self):
        phi = brute_force_permutation_shapley(ConstantGame(3, 1), 3, cap=3)
        assert phi.tolist() == [0, 0, 0]


class TestFullShapley:
    def test_constant(self):
        assert full_shapley(ConstantGame(4, 0.7), 4).tolist() == pytest.approx([0, 0, 0, 0], abs=1e-15)

    def test_additive(self):
        np.testing.assert_allclose(full_shapley(AdditiveGame([0.1, 0.2, 0.3]), 3).phi, [0.1, 0.2, 0.3], atol=1e-12)

    def test_max_game(self):
        np.testing.assert_allclose(full_shapley(MaxGame([1, 2, 3]), 3).phi, [1 / 3, 5 / 6, 11 / 6], atol=1e-12)

    @pytest.mark.parametrize("m", range(1, 8))
    def test_agrees_with_permutation_enumeration(self, m):
        rng = np.random.default_rng(m)
        for _ in range(5):
            game = random_game(rng, m)
            np.testing.assert_allclose(
                full_shapley(game, m).phi, brute_force_permutation_shapley(game, m).phi, atol=1e-9
            )

    @pytest.mark.parametrize("m", range(1, 7))
    def test_efficiency_and_additivity(self, m):
        rng = np.random.default_rng(100 + m)
        g1, g2 = random_game(rng, m), random_game(rng, m)
        a, b = full_shapley(g1, m).phi, full_shapley(g2, m).phi
        both = full_shapley(SumGame(g1, g2), m)
        np.testing.assert_allclose(both.phi, a + b, atol=1e-9)
        assert a.sum() == pytest.approx(g1(range(m)), abs=1e-9)

    def test_requests_each_sorted_coalition_once(self):
        game = CountingGame([0.2, 0.5, 0.1, 0.9])
        full_shapley(game, 4)
        assert len(game.requests) == 16
        assert len(set(game.requests)) == 16
        assert all(list(c) == sorted(c) for c in game.requests)

    def test_parallel_matches_sequential(self):
        game = MaxGame([0.3, 0.1, 0.8, 0.5, 0.5])
        np.testing.assert_array_equal(full_shapley(game, 5, parallelism=4).phi, full_shapley(game, 5).phi)

    def test_cap(self):
        with pytest.raises(CapExceededError, match="cap of 12"):
            full_shapley(ConstantGame(13, 0), 13)

    def test_oracle_failure_names_coalition(self):
        def boom(c):
            if c == (0, 2):
                raise RuntimeError("judge unavailable")
            return 0.0

        with pytest.raises(OracleEvaluationError) as info:
            full_shapley(FunctionGame(3, boom), 3)
        assert info.value.coalition == (0, 2)

    def test_relabeling(self):
        values = [0.9, 0.1, 0.5, 0.5]
        perm = [2, 0, 3, 1]
        phi = full_shapley(MaxGame(values), 4).phi
        np.testing.assert_allclose(full_shapley(MaxGame([values[p] for p in perm]), 4).phi, phi[perm], atol=1e-12)


class TestLeaveOneOut:
    def test_constant(self):
        assert leave_one_out(ConstantGame(3, 0.5), 3).tolist() == [0, 0, 0]

    def test_max_game(self):
        assert leave_one_out(MaxGame([1, 2, 3]), 3).tolist() == [0, 0, 1]

    def test_duplicated_critical_source(self):
        assert leave_one_out(MaxGame([3, 3]), 2).tolist() == [0, 0]
        np.testing.assert_allclose(max_game_shapley([3, 3]).phi, [1.5, 1.5])

    def test_call_count(self):
        game = MaxGame([1, 2, 3, 4])
        leave_one_out(game, 4)
        assert game.call_count == 5
