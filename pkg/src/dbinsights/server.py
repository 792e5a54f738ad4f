"""Annotation service: blind pairwise comparison API plus static UI assets."""

from __future__ import annotations

import json
import logging
import os
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import InsufficientInsights
from .evaluator import ComparisonRecord, run_tournament, sample_pairs
from .manifest import load_manifest

logger = logging.getLogger(__name__)

DEFAULT_PAIRS = 100


class ChoiceBody(BaseModel):
    winner: Literal["A", "B"]


class AnnotationSession:
    """Pair sequence plus the durable answer log for one evaluator.

    Answers are appended (and fsynced) to the session file before being
    acknowledged, and re-read on startup, so a crash between write and ack
    cannot produce duplicates: replays of an answered index are no-ops.
    """

    def __init__(
        self,
        manifest_paths: list[str | Path],
        session_file: str | Path,
        n_pairs: int = DEFAULT_PAIRS,
        seed: int = 0,
        evaluator_id: str = "human",
    ):
        self.session_file = Path(session_file)
        self.evaluator_id = evaluator_id
        self._lock = threading.Lock()

        by_method: dict[str, list[str]] = {}
        self.texts: dict[str, str] = {}
        self.method_of: dict[str, str] = {}
        for path in manifest_paths:
            manifest = load_manifest(path)
            for record in manifest.insights:
                by_method.setdefault(record.method, []).append(record.id)
                self.texts[record.id] = record.text
                self.method_of[record.id] = record.method
        if len(by_method) < 2:
            raise InsufficientInsights("annotation needs manifests from >= 2 methods")
        self.pairs = sample_pairs(by_method, n_pairs, seed)
        self.answers: dict[int, ComparisonRecord] = {}
        self._load_existing()

    def _load_existing(self) -> None:
        if not self.session_file.is_file():
            return
        with open(self.session_file, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                index = int(data.pop("pair_index"))
                self.answers.setdefault(index, ComparisonRecord.from_json(data))

    @property
    def total(self) -> int:
        return len(self.pairs)

    def next_index(self) -> int | None:
        for i in range(1, self.total + 1):
            if i not in self.answers:
                return i
        return None

    def pair_payload(self, index: int) -> dict:
        if not 1 <= index <= self.total:
            raise IndexError(index)
        (_, id_a), (_, id_b) = self.pairs[index - 1]
        return {
            "pair_index": index,
            "insight_a_text": self.texts[id_a],
            "insight_b_text": self.texts[id_b],
            "answered": index in self.answers,
        }

    def submit(self, index: int, winner: str) -> ComparisonRecord:
        if not 1 <= index <= self.total:
            raise IndexError(index)
        with self._lock:
            existing = self.answers.get(index)
            if existing is not None:
                return existing
            (method_a, id_a), (method_b, id_b) = self.pairs[index - 1]
            record = ComparisonRecord(
                evaluator_id=self.evaluator_id,
                insight_a_id=id_a,
                insight_b_id=id_b,
                method_a=method_a,
                method_b=method_b,
                winner=winner,
                timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            )
            line = json.dumps({**record.to_json(), "pair_index": index}, sort_keys=True)
            self.session_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.session_file, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.answers[index] = record
            return record

    def ordered_records(self) -> list[ComparisonRecord]:
        return [self.answers[i] for i in sorted(self.answers)]


def create_app(
    manifest_paths: list[str | Path],
    session_file: str | Path,
    n_pairs: int = DEFAULT_PAIRS,
    seed: int = 0,
    evaluator_id: str = "human",
    assets_dir: str | Path | None = None,
) -> FastAPI:
    session = AnnotationSession(
        manifest_paths, session_file, n_pairs=n_pairs, seed=seed, evaluator_id=evaluator_id
    )
    app = FastAPI(title="dbinsights annotation")
    app.state.session = session

    @app.get("/api/session")
    def get_session() -> dict:
        answered = len(session.answers)
        return {
            "total_pairs": session.total,
            "answered": answered,
            "evaluator_id": session.evaluator_id,
            "next_index": session.next_index(),
            "complete": answered >= session.total,
        }

    @app.get("/api/pair/{index}")
    def get_pair(index: int) -> dict:
        try:
            return session.pair_payload(index)
        except IndexError:
            raise HTTPException(
                status_code=404,
                detail={"error": "unknown_pair", "pair_index": index},
            ) from None

    @app.post("/api/pair/{index}/choice")
    def post_choice(index: int, body: ChoiceBody) -> dict:
        try:
            record = session.submit(index, body.winner)
        except IndexError:
            raise HTTPException(
                status_code=404,
                detail={"error": "unknown_pair", "pair_index": index},
            ) from None
        return {"status": "ok", "pair_index": index, "winner": record.winner}

    @app.get("/api/leaderboard")
    def get_leaderboard() -> dict:
        records = session.ordered_records()
        board = run_tournament(records, keep_history=False)
        return {
            "ratings": {m: round(r, 4) for m, r in sorted(board.ratings.items())},
            "games": len(records),
        }

    if assets_dir is not None and Path(assets_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(assets_dir), html=True), name="ui")

    return app


def serve_annotation(
    manifest_paths: list[str | Path],
    session_file: str | Path,
    bind_address: str = "127.0.0.1:8765",
    n_pairs: int = DEFAULT_PAIRS,
    seed: int = 0,
    evaluator_id: str = "human",
    assets_dir: str | Path | None = None,
) -> None:
    """Run the annotation service until interrupted."""
    import uvicorn

    host, _, port = bind_address.partition(":")
    app = create_app(
        manifest_paths,
        session_file,
        n_pairs=n_pairs,
        seed=seed,
        evaluator_id=evaluator_id,
        assets_dir=assets_dir,
    )
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8765), log_level="info")
