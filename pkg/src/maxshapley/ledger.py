"""Token and call accounting shared by oracles, agents and the harness."""

from __future__ import annotations

import threading
from dataclasses import dataclass


@dataclass
class StageUsage:
    tokens_in: int = 0
    tokens_out: int = 0
    calls: int = 0


class TokenLedger:
    """Thread-safe cumulative token counter, broken down by stage name.

    Totals are derived from the per-stage entries, so they always equal the
    sum over stages.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._stages: dict[str, StageUsage] = {}

    def record(self, stage: str, tokens_in: int, tokens_out: int, calls: int = 1) -> None:
        if tokens_in < 0 or tokens_out < 0 or calls < 0:
            raise ValueError("ledger counts must be non-negative")
        with self._lock:
            usage = self._stages.setdefault(stage, StageUsage())
            usage.tokens_in += int(tokens_in)
            usage.tokens_out += int(tokens_out)
            usage.calls += int(calls)

    def merge(self, other: "TokenLedger") -> None:
        for stage, usage in other.by_stage.items():
            self.record(stage, usage.tokens_in, usage.tokens_out, usage.calls)

    @property
    def by_stage(self) -> dict[str, StageUsage]:
        with self._lock:
            return {k: StageUsage(v.tokens_in, v.tokens_out, v.calls) for k, v in sorted(self._stages.items())}

    @property
    def tokens_in(self) -> int:
        return sum(u.tokens_in for u in self.by_stage.values())

    @property
    def tokens_out(self) -> int:
        return sum(u.tokens_out for u in self.by_stage.values())

    @property
    def calls(self) -> int:
        return sum(u.calls for u in self.by_stage.values())

    def snapshot(self) -> dict:
        return {
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "calls": self.calls,
            "by_stage": {k: vars(v) for k, v in self.by_stage.items()},
        }

    def __repr__(self) -> str:
        return f"TokenLedger(tokens_in={self.tokens_in}, tokens_out={self.tokens_out}, calls={self.calls})"
