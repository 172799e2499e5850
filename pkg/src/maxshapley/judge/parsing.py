"""Extracting scores and lists from free-form model completions."""

from __future__ import annotations

import re

from maxshapley.errors import ScoreParseError, ScoreRangeError, ScoringError

ROUNDOFF = 1e-9

_NUMBER = r"-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_LABELLED = re.compile(r"score\s*[:=]\s*\**\s*(" + _NUMBER + r")", re.IGNORECASE)
_BARE = re.compile(r"(?<![\w.\-])(" + _NUMBER + r")(?![\w])")
_LIST_ITEM = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•])\s*(.+?)\s*$")
_RELEVANCE_LINE = re.compile(r"^\W*(?:source|src)?\s*\[?\s*(\d+)\s*\]?\s*[:=\-–]\s*(.*)$", re.IGNORECASE)


def parse_judge_score(raw: str) -> float:
    """Numeric score in [0, 1] from a completion.

    A ``Score: x`` label wins when present; otherwise the last bare number is
    used. Values within 1e-9 of the interval are snapped onto it.

    Raises:
        ScoreParseError: no number in the text.
        ScoreRangeError: the number lies outside [0, 1]; never clamped.
    """
    labelled = _LABELLED.findall(raw)
    candidates = labelled or _BARE.findall(raw)
    if not candidates:
        raise ScoreParseError(f"no numeric score found in completion: {raw[:200]!r}", raw)
    value = float(candidates[-1])
    if value < -ROUNDOFF or value > 1 + ROUNDOFF:
        raise ScoreRangeError(f"score {value} outside [0, 1]", raw)
    return min(max(value, 0.0), 1.0)


def parse_list(raw: str) -> list[str]:
    """Items of a numbered or bulleted list; plain non-empty lines if no markers are used."""
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    items = [m.group(1) for m in map(_LIST_ITEM.match, lines) if m]
    if not items:
        items = [ln.strip() for ln in lines]
    return [it for it in items if it]


def parse_relevance(raw: str, n_sources: int, keypoint_index: int | None = None) -> list[float]:
    """Scores per source label (1-based, as presented), returned in label order."""
    found: dict[int, float] = {}
    for line in raw.splitlines():
        match = _RELEVANCE_LINE.match(line)
        if not match:
            continue
        label = int(match.group(1))
        if not 1 <= label <= n_sources or label in found:
            continue
        try:
            found[label] = parse_judge_score(match.group(2))
        except ScoreParseError as exc:
            raise ScoringError(
                f"bad score for source label {label}, keypoint {keypoint_index}: {exc}",
                source_index=label - 1,
                keypoint_index=keypoint_index,
            ) from exc
    missing = [k for k in range(1, n_sources + 1) if k not in found]
    if missing:
        raise ScoringError(
            f"no score for source label {missing[0]} (keypoint {keypoint_index}) in completion {raw[:200]!r}",
            source_index=missing[0] - 1,
            keypoint_index=keypoint_index,
        )
    return [found[k] for k in range(1, n_sources + 1)]
