from __future__ import annotations

import dataclasses

import numpy as np

from maxshapley.core.games import AttributionVector
from maxshapley.errors import DomainError


def clip_and_renormalize(phi: AttributionVector, threshold: float) -> AttributionVector:
    """Zero every entry below ``threshold`` and rescale the rest to sum to 1.

    If nothing survives, the all-zero vector is returned with ``degenerate=True``;
    no attribution mass is invented.
    """
    if threshold < 0:
        raise DomainError(f"clipping threshold must be >= 0, got {threshold}")
    values = np.asarray(phi.phi, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError("cannot clip a vector with non-finite entries")
    kept = np.where(values < threshold, 0.0, values)
    total = kept.sum()
    if total > 0:
        return dataclasses.replace(phi, phi=kept / total, clipped=True, degenerate=False)
    return dataclasses.replace(phi, phi=np.zeros_like(values), clipped=True, degenerate=True)
