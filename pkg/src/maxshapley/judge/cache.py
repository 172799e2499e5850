"""Coalition-level utility cache.

Keys are ``(query_id, scope, coalition)``. With canonicalization on, the
coalition is the sorted tuple of member indices, so every ordering of the same
set shares one entry. The store may persist to an append-only JSONL file.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import Future
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from maxshapley.core.games import Coalition, UtilityOracle

logger = logging.getLogger(__name__)

CacheKey = tuple[str, str, Coalition]


@dataclass(frozen=True)
class UtilityCacheEntry:
    key: CacheKey
    score: float
    tokens_in: int = 0
    tokens_out: int = 0

    def to_json(self) -> str:
        query_id, scope, coalition = self.key
        return json.dumps({"key": [query_id, scope, list(coalition)], "score": self.score,
                           "tokens_in": self.tokens_in, "tokens_out": self.tokens_out})


class UtilityCache:
    """Thread-safe score store with at-most-one evaluation per key.

    Concurrent requests for a key that is being computed wait for the first
    evaluation instead of starting their own. Persistence failures are logged
    and counted in :attr:`io_failures`; the computed score is still returned.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[CacheKey, UtilityCacheEntry] = {}
        self._pending: dict[CacheKey, Future] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.io_failures = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    query_id, scope, coalition = rec["key"]
                    key = (str(query_id), str(scope), tuple(int(i) for i in coalition))
                    self._entries[key] = UtilityCacheEntry(key, float(rec["score"]),
                                                           int(rec.get("tokens_in", 0)), int(rec.get("tokens_out", 0)))
                except (ValueError, KeyError, TypeError) as exc:
                    self.io_failures += 1
                    logger.warning("skipping unreadable cache line %d in %s: %s", lineno, self.path, exc)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: CacheKey) -> bool:
        return key in self._entries

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def get_or_compute(self, key: CacheKey, compute: Callable[[], tuple[float, int, int]]) -> float:
        """Cached score for ``key``; ``compute`` returns ``(score, tokens_in, tokens_out)``."""
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                self.hits += 1
                return entry.score
            pending = self._pending.get(key)
            if pending is None:
                owner = True
                pending = self._pending[key] = Future()
                self.misses += 1
            else:
                owner = False
                self.hits += 1
        if not owner:
            return pending.result()
        try:
            score, tokens_in, tokens_out = compute()
        except BaseException as exc:
            with self._lock:
                del self._pending[key]
            pending.set_exception(exc)
            raise
        entry = UtilityCacheEntry(key, float(score), int(tokens_in), int(tokens_out))
        with self._lock:
            self._entries[key] = entry
            del self._pending[key]
            self._persist(entry)
        pending.set_result(entry.score)
        return entry.score

    def _persist(self, entry: UtilityCacheEntry) -> None:
        if self.path is None:
            return
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(entry.to_json() + "\n")
        except OSError as exc:
            self.io_failures += 1
            logger.warning("cache write to %s failed, continuing uncached: %s", self.path, exc)


class CachedOracle(UtilityOracle):
    """Utility oracle that consults a :class:`UtilityCache` before ``inner``.

    ``call_count``, ``ledger`` and ``n_players`` are those of ``inner``, so
    they reflect real evaluations only. With ``canonicalize=False`` the key is
    the coalition in the order the caller passed it.
    """

    def __init__(self, inner: UtilityOracle, cache: UtilityCache, query_id: str, scope: str,
                 canonicalize: bool = True):
        self.inner = inner
        self.cache = cache
        self.query_id = str(query_id)
        self.scope = str(scope)
        self.canonicalize = canonicalize

    @property
    def n_players(self) -> int:
        return self.inner.n_players

    @property
    def call_count(self) -> int:
        return self.inner.call_count

    @property
    def ledger(self):
        return self.inner.ledger

    def key(self, coalition: Iterable[int]) -> CacheKey:
        members = tuple(int(i) for i in coalition)
        return (self.query_id, self.scope, tuple(sorted(members)) if self.canonicalize else members)

    def __call__(self, coalition: Iterable[int]) -> float:
        members = tuple(int(i) for i in coalition)
        key = self.key(members)

        def compute():
            before_in, before_out = self.inner.token_usage
            score = self.inner(members)
            after_in, after_out = self.inner.token_usage
            return score, after_in - before_in, after_out - before_out

        return self.cache.get_or_compute(key, compute)


def cached_utility(coalition: Iterable[int], query_id: str, scope: str, inner: UtilityOracle,
                   cache: UtilityCache, canonicalize: bool = True) -> float:
    """One cached evaluation of ``inner`` on ``coalition``."""
    return CachedOracle(inner, cache, query_id, scope, canonicalize)(coalition)
