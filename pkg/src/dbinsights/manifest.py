"""Run manifests: append-only JSONL provenance logs, one event per line."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO

from .query_agent import AnsweredSubquestion


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class InsightRecord:
    """One insight plus its full provenance chain."""

    id: str
    method: str
    db_id: str
    text: str
    claims: tuple[str, ...]
    consistency: float | None
    hl_question: dict | None  # {"id", "text"} when the method has one
    answered_subquestions: tuple[AnsweredSubquestion, ...]
    usage: dict  # {"calls": int, "cost": float}
    iterations: int = 0
    below_threshold: bool = False
    truncated_length: bool = False

    def __post_init__(self) -> None:
        if self.method != "Serial" and not self.answered_subquestions:
            raise ValueError(
                f"insight {self.id}: provenance chain empty for method {self.method}"
            )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "method": self.method,
            "db_id": self.db_id,
            "text": self.text,
            "claims": list(self.claims),
            "consistency": self.consistency,
            "hl_question": self.hl_question,
            "answered_subquestions": [a.to_json() for a in self.answered_subquestions],
            "usage": self.usage,
            "iterations": self.iterations,
            "flags": {
                "below_threshold": self.below_threshold,
                "truncated_length": self.truncated_length,
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "InsightRecord":
        flags = data.get("flags", {})
        return cls(
            id=data["id"],
            method=data["method"],
            db_id=data["db_id"],
            text=data["text"],
            claims=tuple(data.get("claims", [])),
            consistency=data.get("consistency"),
            hl_question=data.get("hl_question"),
            answered_subquestions=tuple(
                AnsweredSubquestion.from_json(a)
                for a in data.get("answered_subquestions", [])
            ),
            usage=data.get("usage", {}),
            iterations=data.get("iterations", 0),
            below_threshold=bool(flags.get("below_threshold", False)),
            truncated_length=bool(flags.get("truncated_length", False)),
        )


class ManifestWriter:
    """Single appender for one run; events hit disk as they happen."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        self._fh: IO[str] | None = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    def append(self, event: str, **payload: object) -> dict:
        entry: dict = {"event": event, "ts": _now()}
        entry.update(payload)
        self.events.append(entry)
        if self._fh is not None:
            self._fh.write(json.dumps(entry, sort_keys=True) + "\n")
            self._fh.flush()
        return entry

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "ManifestWriter":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


@dataclass
class Manifest:
    """Parsed view of a run manifest."""

    path: Path | None
    events: list[dict]
    method: str = ""
    db_id: str = ""
    long_description: str = ""
    short_description: str = ""
    insights: list[InsightRecord] = field(default_factory=list)
    usage: dict = field(default_factory=dict)

    @classmethod
    def from_events(cls, events: list[dict], path: Path | None = None) -> "Manifest":
        manifest = cls(path=path, events=events)
        for event in events:
            kind = event.get("event")
            if kind == "run_start":
                manifest.method = event.get("method", "")
                manifest.db_id = event.get("db_id", "")
            elif kind == "catalog":
                manifest.long_description = event.get("long_description", "")
                manifest.short_description = event.get("short_description", "")
            elif kind == "insight":
                manifest.insights.append(InsightRecord.from_json(event))
            elif kind == "run_end":
                manifest.usage = event.get("usage", {})
        return manifest

    def insight_ids(self) -> list[str]:
        return [record.id for record in self.insights]


def load_manifest(path: str | Path) -> Manifest:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return Manifest.from_events(events, path=Path(path))
