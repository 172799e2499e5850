"""Agreement metrics between attributions and labels or other attributions."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from maxshapley.errors import InvalidSizeError, UndefinedMetricError


def top_k(phi: Sequence[float], k: int) -> list[int]:
    """Indices of the ``k`` largest scores; ties go to the lower index."""
    phi = np.asarray(phi, dtype=float)
    order = np.lexsort((np.arange(phi.size), -phi))
    return sorted(int(i) for i in order[:k])


def jaccard_at_k(phi: Sequence[float], relevance: Sequence[int]) -> float:
    """|T & R| / |T | R| with R the relevant set and T the top-|R| attributed sources.

    Raises:
        UndefinedMetricError: no source is labelled relevant.
    """
    phi = np.asarray(getattr(phi, "phi", phi), dtype=float)
    if phi.size != len(relevance):
        raise InvalidSizeError(f"{phi.size} attributions but {len(relevance)} labels")
    relevant = {i for i, r in enumerate(relevance) if r}
    if not relevant:
        raise UndefinedMetricError("Jaccard@K needs at least one relevant source (K=0)")
    chosen = set(top_k(phi, len(relevant)))
    return len(chosen & relevant) / len(chosen | relevant)


def kendall_tau_b(a: Sequence[float], b: Sequence[float]) -> float:
    """Tie-adjusted Kendall rank correlation over all index pairs.

    Raises:
        UndefinedMetricError: either vector is constant.
    """
    a = np.asarray(getattr(a, "phi", a), dtype=float)
    b = np.asarray(getattr(b, "phi", b), dtype=float)
    if a.size != b.size:
        raise InvalidSizeError(f"vectors differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise InvalidSizeError("Kendall tau needs at least two items")
    iu = np.triu_indices(a.size, k=1)
    da = np.sign(a[:, None] - a[None, :])[iu]
    db = np.sign(b[:, None] - b[None, :])[iu]
    n0 = da.size
    n1 = int(np.count_nonzero(da == 0))
    n2 = int(np.count_nonzero(db == 0))
    if n1 == n0 or n2 == n0:
        raise UndefinedMetricError("Kendall tau_b is undefined for a constant vector")
    s = float(np.sum(da * db))
    return s / math.sqrt((n0 - n1) * (n0 - n2))
