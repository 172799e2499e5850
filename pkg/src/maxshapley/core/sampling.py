"""Permutation-sampling Shapley estimators (uniform and antithetic)."""

from __future__ import annotations

import numpy as np

from maxshapley.core.games import AttributionVector, Method, UtilityOracle, evaluate
from maxshapley.errors import InvalidArgumentError, InvalidSizeError


def _walk(oracle, order, empty_value: float, m: int) -> np.ndarray:
    """Marginal contribution of every player along one arrival order."""
    marginals = np.zeros(m)
    prefix: list[int] = []
    prev = empty_value
    for player in order:
        prefix.append(int(player))
        current = evaluate(oracle, tuple(prefix))
        marginals[player] = current - prev
        prev = current
    return marginals


def _stderr(samples: np.ndarray) -> np.ndarray:
    if len(samples) < 2:
        return np.full(samples.shape[1], np.nan)
    return samples.std(axis=0, ddof=1) / np.sqrt(len(samples))


def _check(m: int, count: int, what: str) -> None:
    if m < 1:
        raise InvalidSizeError(f"need m >= 1, got {m}")
    if count < 1:
        raise InvalidArgumentError(f"{what} must be >= 1, got {count}")


def mc_uniform_shapley(oracle: UtilityOracle, m: int, n_permutations: int, seed: int) -> AttributionVector:
    """Average marginals over ``n_permutations`` uniformly drawn orders.

    U(empty) is requested once; each permutation then requests its m prefixes,
    in arrival order (so an unsorted cache keys on order).
    """
    _check(m, n_permutations, "n_permutations")
    rng = np.random.default_rng(seed)
    empty = evaluate(oracle, ())
    samples = np.array([_walk(oracle, rng.permutation(m), empty, m) for _ in range(n_permutations)])
    return AttributionVector(
        phi=samples.mean(axis=0),
        method=Method.MCU,
        seed=seed,
        stderr=_stderr(samples),
        oracle_calls=1 + m * n_permutations,
    )


def mc_antithetic_shapley(oracle: UtilityOracle, m: int, n_pairs: int, seed: int) -> AttributionVector:
    """Like :func:`mc_uniform_shapley` but every draw is paired with its reversal.

    The standard error treats each pair's averaged marginals as one sample.
    """
    _check(m, n_pairs, "n_pairs")
    rng = np.random.default_rng(seed)
    empty = evaluate(oracle, ())
    pair_means = []
    for _ in range(n_pairs):
        order = rng.permutation(m)
        forward = _walk(oracle, order, empty, m)
        backward = _walk(oracle, order[::-1], empty, m)
        pair_means.append((forward + backward) / 2.0)
    samples = np.array(pair_means)
    return AttributionVector(
        phi=samples.mean(axis=0),
        method=Method.MCA,
        seed=seed,
        stderr=_stderr(samples),
        oracle_calls=1 + 2 * m * n_pairs,
    )
