from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Source:
    """One retrieved information source (a document or snippet)."""

    id: str
    text: str
    title: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "Source":
        return cls(id=str(d["id"]), text=str(d["text"]), title=str(d.get("title", "")))

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "text": self.text}
