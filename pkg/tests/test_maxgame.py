from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxshapley.core import (
    MaxGame,
    PairProbabilityTable,
    brute_force_permutation_shapley,
    build_pair_probability_table,
    max_game_shapley,
    pair_probability,
)
from maxshapley.errors import DomainError, InvalidSizeError, SchemaError
from oracles import exact_permutation_shapley, max_utility, pair_event_frequencies

valuations = st.lists(st.floats(min_value=0, max_value=10, allow_nan=False), min_size=1, max_size=7)


class TestPairProbabilityTable:
    def test_two_players(self):
        assert build_pair_probability_table(2).margin_prob(2, 1) == pytest.approx(0.5, abs=1e-15)

    def test_three_players(self):
        t = build_pair_probability_table(3)
        assert t.margin_prob(3, 2) == pytest.approx(0.5, abs=1e-15)
        assert t.margin_prob(3, 1) == pytest.approx(1 / 6, abs=1e-15)

    def test_single_player(self):
        t = build_pair_probability_table(1)
        assert t.first_position == 1.0
        assert not np.any(t.margin)

    def test_zero_players(self):
        with pytest.raises(InvalidSizeError):
            build_pair_probability_table(0)

    @pytest.mark.parametrize("m", range(2, 9))
    def test_closed_form_matches_enumeration_exactly(self, m):
        first, events = pair_event_frequencies(m)
        assert first == Fraction(1, m)
        for i in range(2, m + 1):
            for j in range(1, i):
                assert pair_probability(m, j, exact=True) == events.get((i, j), 0)

    @pytest.mark.parametrize("m", range(1, 9))
    def test_row_mass_is_probability_of_beating_all_lower_arrivals(self, m):
        # rank i is a non-zero contributor iff it precedes every higher rank
        t = build_pair_probability_table(m)
        for i in range(1, m + 1):
            mass = t.first_position + sum(t.margin_prob(i, j) for j in range(1, i))
            assert mass == pytest.approx(1 / (m - i + 1), abs=1e-12)
            assert mass <= 1 + 1e-12

    def test_round_trip_bytes(self, tmp_path):
        t = build_pair_probability_table(6)
        path = tmp_path / "t.mspt"
        t.save(path)
        raw = path.read_bytes()
        assert raw[:4] == b"MSPT"
        assert len(raw) == 10 + 8 * (1 + 36)
        back = PairProbabilityTable.load(path)
        assert back.m == 6
        np.testing.assert_array_equal(back.margin, t.margin)

    def test_rejects_foreign_file(self):
        with pytest.raises(SchemaError):
            PairProbabilityTable.from_bytes(b"NOPE" + bytes(20))


class TestMaxGameShapley:
    def test_single_player_takes_all(self):
        assert max_game_shapley([5]).tolist() == [5.0]

    def test_equal_values_split_evenly(self):
        np.testing.assert_allclose(max_game_shapley([0.4] * 5).phi, 0.08, atol=1e-15)

    def test_one_two_three(self):
        np.testing.assert_allclose(max_game_shapley([1, 2, 3]).phi, [1 / 3, 5 / 6, 11 / 6], atol=1e-12)

    def test_null_player(self):
        phi = max_game_shapley([0, 7.5]).phi
        assert phi[0] == 0.0
        assert phi[1] == pytest.approx(7.5)

    def test_output_follows_input_order(self):
        np.testing.assert_allclose(max_game_shapley([3, 1, 2]).phi, [11 / 6, 1 / 3, 5 / 6], atol=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            max_game_shapley([1, -0.1])

    def test_rejects_empty(self):
        with pytest.raises(InvalidSizeError):
            max_game_shapley([])

    def test_rejects_mismatched_table(self):
        with pytest.raises(InvalidSizeError):
            max_game_shapley([1, 2], build_pair_probability_table(3))

    def test_ties_match_rational_reference(self):
        values = [2, 1, 2, 0, 1]
        expected = [float(x) for x in exact_permutation_shapley(max_utility(values), 5)]
        np.testing.assert_allclose(max_game_shapley(values).phi, expected, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(valuations)
    def test_matches_brute_force(self, values):
        bf = brute_force_permutation_shapley(MaxGame(values), len(values)).phi
        np.testing.assert_allclose(max_game_shapley(values).phi, bf, atol=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(valuations)
    def test_table_and_direct_agree(self, values):
        table = build_pair_probability_table(len(values))
        np.testing.assert_allclose(
            max_game_shapley(values, table).phi, max_game_shapley(values).phi, atol=1e-12, rtol=0
        )

    @settings(max_examples=200, deadline=None)
    @given(valuations)
    def test_efficiency(self, values):
        assert max_game_shapley(values).total == pytest.approx(max(values), abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(valuations, st.integers(0, 6), st.integers(0, 6))
    def test_symmetry_of_tied_players(self, values, a, b):
        values = list(values)
        a, b = a % len(values), b % len(values)
        values[b] = values[a]
        phi = max_game_shapley(values).phi
        assert abs(phi[a] - phi[b]) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(valuations, st.randoms())
    def test_relabeling_permutes_output(self, values, rnd):
        perm = list(range(len(values)))
        rnd.shuffle(perm)
        phi = max_game_shapley(values).phi
        permuted = max_game_shapley([values[p] for p in perm]).phi
        np.testing.assert_allclose(permuted, phi[perm], atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(valuations)
    def test_zero_valued_players_get_exactly_zero(self, values):
        values = list(values) + [0.0]
        phi = max_game_shapley(values).phi
        for v, p in zip(values, phi):
            if v == 0:
                assert p == 0.0
