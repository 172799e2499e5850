"""Exhaustive Shapley computations and leave-one-out attribution."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np

from maxshapley.core.games import AttributionVector, Coalition, Method, UtilityOracle, evaluate
from maxshapley.errors import CapExceededError, InvalidSizeError

PERMUTATION_CAP = 8
FULL_SHAPLEY_CAP = 12


def _members(mask: int, m: int) -> Coalition:
    return tuple(i for i in range(m) if mask >> i & 1)


def _evaluate_all_subsets(oracle, m: int, parallelism: int = 1) -> np.ndarray:
    """U over every subset, indexed by bitmask; results keyed by mask, not completion order."""
    coalitions = [_members(mask, m) for mask in range(1 << m)]
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            values = list(pool.map(lambda c: evaluate(oracle, c), coalitions))
    else:
        values = [evaluate(oracle, c) for c in coalitions]
    return np.asarray(values, dtype=float)


@lru_cache(maxsize=None)
def _permutation_masks(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    perms = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    bits = np.left_shift(1, perms)
    after = np.bitwise_or.accumulate(bits, axis=1)
    before = np.concatenate([np.zeros((len(perms), 1), dtype=np.int64), after[:, :-1]], axis=1)
    return perms, before, after


def brute_force_permutation_shapley(oracle: UtilityOracle, m: int, cap: int = PERMUTATION_CAP) -> AttributionVector:
    """Shapley values by averaging marginals over all ``m!`` arrival orders.

    Each distinct coalition is evaluated once; the enumeration itself runs
    over every permutation. Meant as a slow, independent reference.
    """
    if m < 1:
        raise InvalidSizeError(f"need m >= 1, got {m}")
    if m > cap:
        raise CapExceededError("permutation enumeration", m, cap)
    values = _evaluate_all_subsets(oracle, m)
    perms, before, after = _permutation_masks(m)
    marginals = values[after] - values[before]
    phi = np.zeros(m)
    np.add.at(phi, perms.ravel(), marginals.ravel())
    phi /= math.factorial(m)
    return AttributionVector(phi=phi, method=Method.BRUTE_FORCE, oracle_calls=1 << m)


def full_shapley(oracle: UtilityOracle, m: int, cap: int = FULL_SHAPLEY_CAP, parallelism: int = 1) -> AttributionVector:
    """Exact Shapley values by subset enumeration, O(m 2^m).

    Every coalition (including the empty one) is requested exactly once, in
    sorted form, so a canonical cache sees 2^m distinct keys.
    """
    if m < 1:
        raise InvalidSizeError(f"need m >= 1, got {m}")
    if m > cap:
        raise CapExceededError("FullShapley", m, cap)
    values = _evaluate_all_subsets(oracle, m, parallelism)
    masks = np.arange(1 << m)
    sizes = np.array([bin(x).count("1") for x in range(1 << m)])
    coef = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)])
    phi = np.zeros(m)
    for i in range(m):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(coef[sizes[without]] * (values[without | bit] - values[without]))
    return AttributionVector(phi=phi, method=Method.FULL_SHAPLEY, oracle_calls=1 << m)


def leave_one_out(oracle: UtilityOracle, m: int) -> AttributionVector:
    """``phi_i = U(S) - U(S minus i)``; m + 1 oracle requests."""
    if m < 1:
        raise InvalidSizeError(f"need m >= 1, got {m}")
    everyone = tuple(range(m))
    total = evaluate(oracle, everyone)
    phi = [total - evaluate(oracle, everyone[:i] + everyone[i + 1:]) for i in range(m)]
    return AttributionVector(phi=phi, method=Method.LOO, oracle_calls=m + 1)
