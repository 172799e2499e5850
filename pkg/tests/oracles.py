"""Slow, independent reference computations used only by the tests.

Nothing here imports the solvers under test.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def pair_event_frequencies(m: int) -> tuple[Fraction, dict[tuple[int, int], Fraction]]:
    """Count, over all m! orders of ranks 1..m, who is the running max when each rank arrives.

    Returns the probability of arriving first (same for every rank) and, for
    every ``j < i``, the probability that rank ``i`` arrives while rank ``j``
    is the best already present.
    """
    counts: dict[tuple[int, int], int] = {}
    first = 0
    total = math.factorial(m)
    for perm in itertools.permutations(range(1, m + 1)):
        best = 0
        for pos, rank in enumerate(perm):
            if pos == 0 and rank == 1:
                first += 1
            if pos > 0 and best < rank:
                counts[(rank, best)] = counts.get((rank, best), 0) + 1
            best = max(best, rank)
    return Fraction(first, total), {k: Fraction(v, total) for k, v in counts.items()}


def exact_permutation_shapley(utility, m: int) -> list[Fraction]:
    """Shapley values in rational arithmetic by walking every permutation.

    ``utility`` receives a frozenset and must return something Fraction-compatible.
    """
    phi = [Fraction(0)] * m
    for perm in itertools.permutations(range(m)):
        seen: set[int] = set()
        prev = Fraction(utility(frozenset()))
        for p in perm:
            seen.add(p)
            cur = Fraction(utility(frozenset(seen)))
            phi[p] += cur - prev
            prev = cur
    n = math.factorial(m)
    return [x / n for x in phi]


def max_utility(values):
    return lambda s: max((Fraction(values[i]) for i in s), default=Fraction(0))


def kendall_tau_b_pairs(a, b) -> tuple[int, int, int, int, int]:
    """Return (concordant, discordant, n0, n1, n2) by brute force over pairs."""
    n = len(a)
    c = d = t_a = t_b = 0
    for i, j in itertools.combinations(range(n), 2):
        da = (a[i] > a[j]) - (a[i] < a[j])
        db = (b[i] > b[j]) - (b[i] < b[j])
        if da == 0:
            t_a += 1
        if db == 0:
            t_b += 1
        if da * db > 0:
            c += 1
        elif da * db < 0:
            d += 1
    return c, d, n * (n - 1) // 2, t_a, t_b
