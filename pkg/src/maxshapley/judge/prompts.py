"""Prompt templates with named placeholders.

Placeholders are ``{query}``, ``{answer}``, ``{sources}``, ``{ground_truth}``,
``{keypoint}`` and ``{keypoints}``. Any other brace pair is left alone, so
templates may contain literal JSON.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from maxshapley.errors import UsageError
from maxshapley.sources import Source

TEMPLATE_IDS = ("answer", "judge", "judge_reference", "keypoints", "distill", "relevance")
PLACEHOLDERS = ("query", "answer", "sources", "ground_truth", "keypoint", "keypoints")
_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


def _default_text(template_id: str) -> str:
    return resources.files("maxshapley.judge").joinpath("templates", f"{template_id}.txt").read_text("utf-8")


class PromptTemplates:
    """The set of templates one endpoint uses; any subset may be overridden."""

    def __init__(self, overrides: Mapping[str, str] | None = None):
        self._texts = {tid: _default_text(tid) for tid in TEMPLATE_IDS}
        for tid, text in (overrides or {}).items():
            if tid not in TEMPLATE_IDS:
                raise UsageError(f"unknown template id {tid!r}; expected one of {TEMPLATE_IDS}")
            self._texts[tid] = text

    @classmethod
    def from_directory(cls, path: str | Path) -> "PromptTemplates":
        """Load ``<template_id>.txt`` files found in ``path`` over the defaults."""
        path = Path(path)
        return cls({p.stem: p.read_text("utf-8") for p in path.glob("*.txt") if p.stem in TEMPLATE_IDS})

    def __getitem__(self, template_id: str) -> str:
        try:
            return self._texts[template_id]
        except KeyError:
            raise UsageError(f"unknown template id {template_id!r}") from None

    def render(self, template_id: str, **fields: str) -> str:
        def sub(match):
            name = match.group(1)
            if name not in fields:
                raise UsageError(f"template {template_id!r} needs field {name!r}")
            return str(fields[name])

        return _PLACEHOLDER_RE.sub(sub, self[template_id])


def format_sources(sources: Sequence[Source]) -> str:
    if not sources:
        return "(no sources provided)"
    blocks = []
    for label, src in enumerate(sources, start=1):
        head = f"[Source {label}]" + (f" {src.title}" if src.title else "")
        blocks.append(f"{head}\n{src.text}")
    return "\n\n".join(blocks)


def format_keypoints(points: Sequence[str]) -> str:
    return "\n".join(f"{k}. {p}" for k, p in enumerate(points, start=1))
