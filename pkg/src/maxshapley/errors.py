"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to pick an exit code:
``usage`` (1), ``data`` (2), ``oracle`` (3) and ``numeric`` (4).
"""

from __future__ import annotations

EXIT_CODES = {"usage": 1, "data": 2, "oracle": 3, "numeric": 4}


class MaxShapleyError(Exception):
    category = "numeric"

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]


# -- argument / numeric errors ------------------------------------------------


class InvalidSizeError(MaxShapleyError, ValueError):
    """Player count or vector length is not acceptable (e.g. ``m == 0``)."""


class DomainError(MaxShapleyError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class InvalidArgumentError(MaxShapleyError, ValueError):
    pass


class CapExceededError(MaxShapleyError, ValueError):
    """Exhaustive computation refused because ``m`` exceeds the configured cap."""

    def __init__(self, what: str, m: int, cap: int):
        super().__init__(f"{what} refused for m={m}: exceeds cap of {cap} players (override with cap=...)")
        self.m = m
        self.cap = cap


class EstimationError(MaxShapleyError):
    """Regression-based estimator could not be solved."""


class UndefinedMetricError(MaxShapleyError, ValueError):
    """Metric is undefined on this input (constant vector, no relevant label)."""


# -- oracle errors ------------------------------------------------------------


class OracleError(MaxShapleyError):
    category = "oracle"


class OracleEvaluationError(OracleError):
    """A utility oracle failed on a specific coalition."""

    def __init__(self, coalition: tuple[int, ...], cause: BaseException):
        super().__init__(f"oracle failed on coalition {list(coalition)}: {cause}")
        self.coalition = coalition
        self.cause = cause


class EndpointError(OracleError):
    """Transport failure after exhausting retries."""


class EmptyAnswerError(OracleError):
    pass


class ReplayMissError(OracleError):
    """Replay transcript holds no completion for the requested prompt."""


class ScoreParseError(OracleError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class ScoreRangeError(ScoreParseError):
    pass


class DecompositionError(OracleError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class DistillationError(OracleError):
    pass


class ScoringError(OracleError):
    """Relevance score for source ``i`` and keypoint ``j`` could not be obtained."""

    def __init__(self, message: str, source_index: int | None = None, keypoint_index: int | None = None):
        super().__init__(message)
        self.source_index = source_index
        self.keypoint_index = keypoint_index


class StageError(MaxShapleyError):
    """Wraps a failure of one pipeline stage; keeps the inner category."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.category = getattr(cause, "category", "oracle")


# -- input errors ---------------------------------------------------------------


class InvalidInputError(MaxShapleyError, ValueError):
    category = "data"


class SchemaError(MaxShapleyError, ValueError):
    category = "data"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class UsageError(MaxShapleyError):
    category = "usage"
