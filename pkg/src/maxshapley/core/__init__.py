"""Exact and approximate Shapley solvers over arbitrary utility oracles."""

from maxshapley.core.clipping import clip_and_renormalize
from maxshapley.core.exact import brute_force_permutation_shapley, full_shapley, leave_one_out
from maxshapley.core.games import (
    AdditiveGame,
    AttributionVector,
    Coalition,
    ConstantGame,
    FunctionGame,
    MaxGame,
    Method,
    SumGame,
    UtilityOracle,
    canonical,
)
from maxshapley.core.kernel import ALL, kernel_shap
from maxshapley.core.maxgame import (
    PairProbabilityTable,
    build_pair_probability_table,
    max_game_shapley,
    pair_probability,
)
from maxshapley.core.sampling import mc_antithetic_shapley, mc_uniform_shapley

__all__ = [
    "ALL",
    "AdditiveGame",
    "AttributionVector",
    "Coalition",
    "ConstantGame",
    "FunctionGame",
    "MaxGame",
    "Method",
    "PairProbabilityTable",
    "SumGame",
    "UtilityOracle",
    "brute_force_permutation_shapley",
    "build_pair_probability_table",
    "canonical",
    "clip_and_renormalize",
    "full_shapley",
    "kernel_shap",
    "leave_one_out",
    "max_game_shapley",
    "mc_antithetic_shapley",
    "mc_uniform_shapley",
    "pair_probability",
]
