"""Exact Shapley values of the maximization game ``Max(S') = max_{i in S'} v_i``.

Sort the players ascending (ties broken by original index, so the order is
total). A player of rank ``i`` contributes ``v_i`` when it arrives first and
``v_i - v_j`` when the best player already present has rank ``j < i``; it
contributes nothing once a higher-ranked player is present. The probability of
the second event,

    sum_{k=2}^{j+1} 1/m * (k-1)/(m-1) * prod_{l=1}^{m-j-1} (m-k-l+1)/(m-1-l),

depends only on the ranks and ``m``, never on the values, so it can be
tabulated once per ``m``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from maxshapley.core.games import AttributionVector, Method, check_valuation
from maxshapley.errors import InvalidSizeError, SchemaError

TABLE_MAGIC = b"MSPT"
TABLE_VERSION = 1
_HEADER = struct.Struct("<4sHI")


def _p_c(m: int, j: int, k: int, one=1.0):
    # all m-j-1 players ranked above j (other than i) land after position k
    p = one
    for ell in range(1, m - j):
        p = p * (m - k - ell + 1) / (m - 1 - ell)
    return p


def pair_probability(m: int, j: int, exact: bool = False):
    """P(marginal of a rank-``i`` player equals ``v_i - v_j``), for any ``i > j``.

    With ``exact=True`` the result is a :class:`~fractions.Fraction`.
    """
    if not 1 <= j < m:
        raise InvalidSizeError(f"rank j={j} must satisfy 1 <= j < m={m}")
    one = Fraction(1) if exact else 1.0
    total = one * 0
    for k in range(2, j + 2):
        p_a = one / m
        p_b = one * (k - 1) / (m - 1)
        total += p_a * p_b * _p_c(m, j, k, one)
    return total


@dataclass(frozen=True)
class PairProbabilityTable:
    """Rank-pair probabilities for a max game with ``m`` players.

    ``margin[i-1, j-1]`` holds the probability for ranks ``1 <= j < i <= m``
    (entries with ``j >= i`` are zero).
    """

    m: int
    first_position: float
    margin: np.ndarray

    def margin_prob(self, rank_i: int, rank_j: int) -> float:
        if not 1 <= rank_j < rank_i <= self.m:
            raise InvalidSizeError(f"need 1 <= rank_j < rank_i <= {self.m}, got ({rank_i}, {rank_j})")
        return float(self.margin[rank_i - 1, rank_j - 1])

    def to_bytes(self) -> bytes:
        body = np.concatenate([[self.first_position], self.margin.ravel()]).astype("<f8")
        return _HEADER.pack(TABLE_MAGIC, TABLE_VERSION, self.m) + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PairProbabilityTable":
        if len(data) < _HEADER.size:
            raise SchemaError("truncated pair-probability table")
        magic, version, m = _HEADER.unpack_from(data)
        if magic != TABLE_MAGIC:
            raise SchemaError(f"bad table magic {magic!r}")
        if version != TABLE_VERSION:
            raise SchemaError(f"unsupported table version {version}")
        body = np.frombuffer(data[_HEADER.size:], dtype="<f8")
        if body.size != 1 + m * m:
            raise SchemaError(f"table body has {body.size} floats, expected {1 + m * m}")
        return cls(m=m, first_position=float(body[0]), margin=body[1:].reshape(m, m).astype(float))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "PairProbabilityTable":
        return cls.from_bytes(Path(path).read_bytes())


def build_pair_probability_table(m: int) -> PairProbabilityTable:
    """Tabulate the rank-pair probabilities for ``m`` players.

    Entries are computed in exact rational arithmetic and rounded once.
    """
    if m < 1:
        raise InvalidSizeError(f"pair-probability table needs m >= 1, got {m}")
    margin = np.zeros((m, m))
    by_j = {j: float(pair_probability(m, j, exact=True)) for j in range(1, m)}
    for i in range(2, m + 1):
        for j in range(1, i):
            margin[i - 1, j - 1] = by_j[j]
    margin.setflags(write=False)
    return PairProbabilityTable(m=m, first_position=1.0 / m, margin=margin)


def _direct_probabilities(m: int) -> np.ndarray:
    # p_C obeys p_C(k+1) = p_C(k) * (m-k-L)/(m-k) with L = m-j-1 and p_C(2) = 1,
    # which keeps each rank pair O(m) and the whole solve O(m^3)
    probs = np.zeros(m + 1)
    for j in range(1, m):
        L = m - j - 1
        p_c = 1.0
        total = 0.0
        for k in range(2, j + 2):
            total += (1.0 / m) * ((k - 1) / (m - 1)) * p_c
            p_c *= (m - k - L) / (m - k) if m - k > 0 else 0.0
        probs[j] = total
    return probs


def max_game_shapley(values: Sequence[float], table: PairProbabilityTable | None = None) -> AttributionVector:
    """Exact Shapley values of the max game over non-negative ``values``.

    Args:
        values: one non-negative score per player.
        table: optional precomputed table for ``len(values)`` players; turns the
            O(m^3) solve into O(m^2).

    Returns:
        AttributionVector in the original player order, with ``Max(empty) = 0``.
    """
    vals = check_valuation(values)
    m = vals.size
    if table is not None and table.m != m:
        raise InvalidSizeError(f"table built for m={table.m}, valuation has m={m}")

    order = np.lexsort((np.arange(m), vals))
    s = vals[order]
    phi_sorted = np.zeros(m)
    if table is None:
        probs = _direct_probabilities(m)
        for r in range(1, m + 1):
            acc = s[r - 1] / m
            for j in range(1, r):
                acc += probs[j] * (s[r - 1] - s[j - 1])
            phi_sorted[r - 1] = acc
    else:
        for r in range(1, m + 1):
            acc = s[r - 1] * table.first_position
            row = table.margin[r - 1]
            for j in range(1, r):
                acc += row[j - 1] * (s[r - 1] - s[j - 1])
            phi_sorted[r - 1] = acc

    phi = np.empty(m)
    phi[order] = phi_sorted
    return AttributionVector(phi=phi, method=Method.MAX_GAME_EXACT)
