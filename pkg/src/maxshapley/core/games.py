"""Players, coalitions, attribution vectors and the utility-oracle abstraction."""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from maxshapley.errors import DomainError, InvalidSizeError, OracleEvaluationError
from maxshapley.ledger import TokenLedger

Coalition = tuple[int, ...]


class Method(str, enum.Enum):
    MAX_GAME_EXACT = "MaxGameExact"
    FULL_SHAPLEY = "FullShapley"
    BRUTE_FORCE = "BruteForce"
    MCU = "MCU"
    MCA = "MCA"
    KERNEL_SHAP = "KernelSHAP"
    LOO = "LOO"
    MAXSHAPLEY = "MaxShapleyPipeline"


def canonical(coalition: Iterable[int], m: int | None = None) -> Coalition:
    """Sorted, duplicate-free tuple of player indices.

    Raises:
        DomainError: duplicate index, or index outside ``[0, m)`` when ``m`` is given.
    """
    members = tuple(sorted(int(i) for i in coalition))
    if len(set(members)) != len(members):
        raise DomainError(f"coalition has duplicate players: {members}")
    if members and (members[0] < 0 or (m is not None and members[-1] >= m)):
        raise DomainError(f"coalition {members} out of range for m={m}")
    return members


def check_valuation(values: Sequence[float]) -> np.ndarray:
    """Validate a max-game valuation: non-empty, finite, non-negative."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidSizeError("valuation must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise DomainError("valuation entries must be finite")
    if np.any(arr < 0):
        raise DomainError(f"valuation entries must be non-negative, got {arr.tolist()}")
    return arr


@dataclass(frozen=True)
class AttributionVector:
    """Per-player scores together with how they were produced.

    ``stderr`` is filled in by the Monte-Carlo estimators. ``degenerate`` marks a
    clipped vector whose entries were all zeroed.
    """

    phi: np.ndarray
    method: Method
    seed: int | None = None
    clipped: bool = False
    degenerate: bool = False
    stderr: np.ndarray | None = None
    oracle_calls: int | None = None

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        if self.stderr is not None:
            se = np.array(self.stderr, dtype=float)
            se.setflags(write=False)
            object.__setattr__(self, "stderr", se)

    def __len__(self) -> int:
        return len(self.phi)

    @property
    def total(self) -> float:
        return float(self.phi.sum())

    def tolist(self) -> list[float]:
        return [float(x) for x in self.phi]


class UtilityOracle:
    """Coalition -> score function with call and token accounting.

    Subclasses implement :meth:`_evaluate`. Coalitions arrive as tuples whose
    order is whatever the caller used (arrival order for permutation samplers);
    subclasses that do not care about order should treat them as sets.
    """

    def __init__(self, n_players: int):
        if n_players < 1:
            raise InvalidSizeError(f"need at least one player, got {n_players}")
        self.n_players = int(n_players)
        self.call_count = 0
        self.ledger = TokenLedger()
        self._count_lock = threading.Lock()

    def __call__(self, coalition: Iterable[int]) -> float:
        members = tuple(int(i) for i in coalition)
        canonical(members, self.n_players)
        with self._count_lock:
            self.call_count += 1
        value = float(self._evaluate(members))
        if not math.isfinite(value):
            raise DomainError(f"oracle returned non-finite score {value} for {members}")
        return value

    def _evaluate(self, coalition: Coalition) -> float:
        raise NotImplementedError

    @property
    def token_usage(self) -> tuple[int, int]:
        return self.ledger.tokens_in, self.ledger.tokens_out


def evaluate(oracle: Callable[[Coalition], float], coalition: Coalition) -> float:
    """Call ``oracle`` and re-raise any failure tagged with the coalition."""
    try:
        return oracle(coalition)
    except OracleEvaluationError:
        raise
    except Exception as exc:
        raise OracleEvaluationError(tuple(coalition), exc) from exc


# -- synthetic games ----------------------------------------------------------


class ConstantGame(UtilityOracle):
    """U(S') = c for every coalition, including the empty one."""

    def __init__(self, n_players: int, value: float):
        super().__init__(n_players)
        self.value = float(value)

    def _evaluate(self, coalition):
        return self.value


class AdditiveGame(UtilityOracle):
    def __init__(self, weights: Sequence[float]):
        super().__init__(len(weights))
        self.weights = np.asarray(weights, dtype=float)

    def _evaluate(self, coalition):
        return float(sum(self.weights[i] for i in sorted(coalition)))


class MaxGame(UtilityOracle):
    """U(S') = max of member values, with U(empty) = 0."""

    def __init__(self, values: Sequence[float]):
        vals = check_valuation(values)
        super().__init__(len(vals))
        self.values = vals

    def _evaluate(self, coalition):
        return float(max((self.values[i] for i in coalition), default=0.0))


class FunctionGame(UtilityOracle):
    """Wraps a plain callable that receives the canonical (sorted) coalition."""

    def __init__(self, n_players: int, fn: Callable[[Coalition], float]):
        super().__init__(n_players)
        self.fn = fn

    def _evaluate(self, coalition):
        return self.fn(tuple(sorted(coalition)))


class SumGame(UtilityOracle):
    """Pointwise sum of games over the same players."""

    def __init__(self, *parts: UtilityOracle):
        sizes = {p.n_players for p in parts}
        if len(sizes) != 1:
            raise InvalidSizeError(f"summed games must share the player count, got {sorted(sizes)}")
        super().__init__(sizes.pop())
        self.parts = parts

    def _evaluate(self, coalition):
        return float(sum(p(coalition) for p in self.parts))
