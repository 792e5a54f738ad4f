"""End-to-end orchestration: generation runs, LLM judging, report export."""

from __future__ import annotations

import html
import json
import logging
import re
import sqlite3
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

from .catalog import DatabaseCatalog, build_catalog, render_schema_text
from .config import MethodConfig
from .errors import (
    DbInsightsError,
    InsufficientInsights,
    JudgeParseFailure,
    UnknownMethod,
)
from .evaluator import (
    ComparisonRecord,
    CorrectnessAnnotation,
    bootstrap_ci,
    correctness_score,
    llm_compare,
    normalize_insightfulness,
    read_comparisons,
    sample_pairs,
    write_comparisons,
)
from .hypothesis import (
    MODE_FULL,
    MODE_FULL_DESCRIPTION,
    SubQuestion,
    generate_direct_low_level,
    generate_high_level,
    generate_low_level,
)
from .llm import LlmGateway, aggregate_cost
from .manifest import InsightRecord, ManifestWriter, load_manifest
from .query_agent import AnsweredSubquestion, answer_subquestion
from .summarizer import reflect_loop, split_sentences
from . import prompts

logger = logging.getLogger(__name__)

MAX_SERIAL_INSIGHTS = 10
_BIG_TABLE_ROWS = 5000  # tables larger than this can never fit a serial prompt


def _quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _render_table_html(name: str, columns: list[str], rows: list[tuple]) -> str:
    parts = [f"<h3>{html.escape(name)}</h3>", "<table>"]
    parts.append("<tr>" + "".join(f"<th>{html.escape(str(c))}</th>" for c in columns) + "</tr>")
    for row in rows:
        cells = "".join(
            "<td>" + ("" if v is None else html.escape(str(v))) + "</td>" for v in row
        )
        parts.append(f"<tr>{cells}</tr>")
    parts.append("</table>")
    return "\n".join(parts)


def serialize_html_subset(db_path: str | Path, char_budget: int = 12000) -> str:
    """Whole tables in ascending row-count order until the character budget is hit.

    If not even the smallest table fits, its rows are cut to fit so the
    prompt always carries some data.
    """
    conn = sqlite3.connect(f"file:{Path(db_path)}?mode=ro", uri=True)
    try:
        names = [
            r[0]
            for r in conn.execute(
                "SELECT name FROM sqlite_master"
                " WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name"
            )
        ]
        sized = sorted(
            ((conn.execute(f"SELECT COUNT(*) FROM {_quote_ident(n)}").fetchone()[0], n) for n in names),
        )
        pieces: list[str] = []
        used = 0
        for count, name in sized:
            if count > _BIG_TABLE_ROWS and pieces:
                continue
            cursor = conn.execute(f"SELECT * FROM {_quote_ident(name)}")
            columns = [d[0] for d in cursor.description]
            rows = cursor.fetchmany(min(count, _BIG_TABLE_ROWS))
            piece = _render_table_html(name, columns, rows)
            if used + len(piece) > char_budget:
                if pieces:
                    break
                while rows and used + len(piece) > char_budget:
                    rows = rows[: max(len(rows) // 2, 0)]
                    piece = _render_table_html(name, columns, rows)
                    if not rows:
                        break
            pieces.append(piece)
            used += len(piece)
            if used >= char_budget:
                break
        return "\n".join(pieces)
    finally:
        conn.close()


def _parse_serial_insights(text: str) -> list[str]:
    parts = re.split(r"(?m)^\s*(?:\d+[.)]|[-*])\s+", text)
    items = [p.strip() for p in parts[1:] if p.strip()]
    if not items:
        items = [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]
    return items[:MAX_SERIAL_INSIGHTS]


class _InsightBuilder:
    """Names insights sequentially and snapshots per-insight usage."""

    def __init__(self, config: MethodConfig, db_id: str, gateway: LlmGateway):
        self.config = config
        self.db_id = db_id
        self.gateway = gateway
        self.counter = 0
        self._mark = 0

    def start(self) -> None:
        self._mark = len(self.gateway.ledger)

    def usage_slice(self) -> dict:
        records = self.gateway.ledger[self._mark:]
        return {
            "calls": len(records),
            "cost": sum(r.cost for r in records),
        }

    def next_id(self) -> str:
        self.counter += 1
        return f"{self.config.name.lower()}-{self.db_id}-{self.counter:02d}"


def _answer_all(
    subquestions: list[SubQuestion],
    catalog: DatabaseCatalog,
    db_path: Path,
    gateway: LlmGateway,
    config: MethodConfig,
    writer: ManifestWriter,
) -> list[AnsweredSubquestion]:
    answered = []
    for sq in subquestions:
        writer.append("subquestion", id=sq.id, parent_id=sq.parent_id, text=sq.text)

        def log_attempt(attempt: int, sql: str, error: str | None, sq_id: str = sq.id) -> None:
            writer.append("sql_attempt", id=sq_id, attempt=attempt, sql=sql, error=error)

        try:
            result = answer_subquestion(
                sq,
                catalog,
                db_path,
                gateway,
                max_retries=config.max_retries,
                row_limit=config.row_limit,
                timeout_s=config.timeout_s,
                score_threshold=config.tau_a,
                on_attempt=log_attempt,
            )
        except DbInsightsError as exc:
            logger.warning("subquestion %s skipped: %s", sq.id, exc)
            writer.append("subquestion_failed", id=sq.id, error=str(exc))
            continue
        writer.append("answer", **result.to_json())
        answered.append(result)
    return answered


def _emit_insight(
    writer: ManifestWriter,
    builder: _InsightBuilder,
    records: list[InsightRecord],
    *,
    text: str,
    claims: tuple[str, ...],
    consistency: float | None,
    hl_question: dict | None,
    answered: tuple[AnsweredSubquestion, ...],
    iterations: int,
    below_threshold: bool,
    truncated_length: bool,
) -> None:
    record = InsightRecord(
        id=builder.next_id(),
        method=builder.config.name,
        db_id=builder.db_id,
        text=text,
        claims=claims,
        consistency=consistency,
        hl_question=hl_question,
        answered_subquestions=answered,
        usage=builder.usage_slice(),
        iterations=iterations,
        below_threshold=below_threshold,
        truncated_length=truncated_length,
    )
    writer.append("insight", **record.to_json())
    records.append(record)


def _run_high_level_mode(
    config: MethodConfig,
    catalog: DatabaseCatalog,
    db_path: Path,
    gateway: LlmGateway,
    writer: ManifestWriter,
    builder: _InsightBuilder,
) -> list[InsightRecord]:
    mode = MODE_FULL if config.name == "HLI" else MODE_FULL_DESCRIPTION
    description = (
        catalog.short_description if mode == MODE_FULL else catalog.long_description
    )
    questions = generate_high_level(description, mode, gateway)
    records: list[InsightRecord] = []
    for hl in questions:
        writer.append("hl_question", id=hl.id, text=hl.text, source_mode=hl.source_mode)
        builder.start()
        try:
            subquestions = generate_low_level(hl, catalog, gateway)
        except DbInsightsError as exc:
            logger.warning("high-level question %s skipped: %s", hl.id, exc)
            writer.append("hl_dropped", id=hl.id, reason=str(exc))
            continue
        answered = _answer_all(subquestions, catalog, db_path, gateway, config, writer)
        kept = [a for a in answered if a.kept]
        if not kept:
            writer.append("hl_dropped", id=hl.id, reason="no answer passed score gating")
            continue
        draft = reflect_loop(
            hl.text,
            [a.verbalization for a in kept],
            gateway,
            tau_h=config.tau_h,
            maxit=config.maxit,
        )
        _emit_insight(
            writer,
            builder,
            records,
            text=draft.text,
            claims=draft.claims,
            consistency=draft.consistency,
            hl_question={"id": hl.id, "text": hl.text},
            answered=tuple(answered),
            iterations=draft.iterations,
            below_threshold=draft.below_threshold,
            truncated_length=draft.length_truncated,
        )
    return records


def _run_direct_mode(
    config: MethodConfig,
    catalog: DatabaseCatalog,
    db_path: Path,
    gateway: LlmGateway,
    writer: ManifestWriter,
    builder: _InsightBuilder,
) -> list[InsightRecord]:
    subquestions = generate_direct_low_level(catalog, gateway)
    records: list[InsightRecord] = []
    for sq in subquestions:
        builder.start()
        answered = _answer_all([sq], catalog, db_path, gateway, config, writer)
        kept = [a for a in answered if a.kept]
        if not kept:
            continue
        draft = reflect_loop(
            sq.text,
            [a.verbalization for a in kept],
            gateway,
            tau_h=config.tau_h,
            maxit=config.maxit,
        )
        _emit_insight(
            writer,
            builder,
            records,
            text=draft.text,
            claims=draft.claims,
            consistency=draft.consistency,
            hl_question=None,
            answered=tuple(answered),
            iterations=draft.iterations,
            below_threshold=draft.below_threshold,
            truncated_length=draft.length_truncated,
        )
    return records


def _run_serial_mode(
    config: MethodConfig,
    catalog: DatabaseCatalog,
    db_path: Path,
    gateway: LlmGateway,
    writer: ManifestWriter,
    builder: _InsightBuilder,
) -> list[InsightRecord]:
    data_html = serialize_html_subset(db_path, config.serial_char_budget)
    writer.append("serial_subset", chars=len(data_html))
    prompt = prompts.fill(
        prompts.SERIAL_INSIGHTS,
        tables=", ".join(catalog.table_names()),
        tables_description=catalog.long_description,
        schema=render_schema_text(catalog),
        Data=data_html,
    )
    reply = gateway.send("serial_generator", [("user", prompt)])
    records: list[InsightRecord] = []
    # One generation call covers every serial insight; per-insight cost is
    # only meaningful for the per-question methods, so it stays on run_end.
    for text in _parse_serial_insights(reply):
        builder.start()
        _emit_insight(
            writer,
            builder,
            records,
            text=text,
            claims=(),
            consistency=None,
            hl_question=None,
            answered=(),
            iterations=0,
            below_threshold=False,
            truncated_length=len(split_sentences(text)) > 3,
        )
    return records


def run_generate(
    config: MethodConfig,
    db_path: str | Path,
    gateway: LlmGateway,
    out_path: str | Path | None = None,
) -> list[InsightRecord]:
    """One full generation run; events stream to the manifest as they happen.

    Only catalog construction is fatal; individual question failures are
    logged into the manifest and skipped.
    """
    db_path = Path(db_path)
    writer = ManifestWriter(out_path)
    try:
        writer.append(
            "run_start",
            method=config.name,
            db_id=db_path.stem,
            db_path=str(db_path),
            config=config.to_json(),
        )
        catalog = build_catalog(db_path, gateway, need_short=config.name == "HLI")
        writer.append(
            "catalog",
            db_id=catalog.db_id,
            tables=catalog.table_names(),
            long_description=catalog.long_description,
            short_description=catalog.short_description,
        )
        builder = _InsightBuilder(config, catalog.db_id, gateway)
        if config.name in ("HLI", "HLI-wS"):
            records = _run_high_level_mode(config, catalog, db_path, gateway, writer, builder)
        elif config.name == "HLI-wH":
            records = _run_direct_mode(config, catalog, db_path, gateway, writer, builder)
        elif config.name == "Serial":
            records = _run_serial_mode(config, catalog, db_path, gateway, writer, builder)
        else:
            raise ValueError(f"unsupported method {config.name!r}")
        usage = {
            tag: {"calls": cost.calls, "cost": cost.total_cost}
            for tag, cost in sorted(aggregate_cost(gateway.ledger).items())
        }
        writer.append(
            "run_end",
            insight_ids=[r.id for r in records],
            counts={"insights": len(records)},
            usage=usage,
        )
    finally:
        writer.close()
    return records


def judge_insightfulness(
    manifest_paths: list[str | Path],
    n_comparisons: int,
    gateway: LlmGateway,
    seed: int = 0,
    evaluator_id: str = "llm-judge",
    out_path: str | Path | None = None,
) -> list[ComparisonRecord]:
    """Sample cross-method pairs from the manifests and judge each one."""
    manifests = [load_manifest(p) for p in manifest_paths]
    by_method: dict[str, list[str]] = defaultdict(list)
    texts: dict[str, str] = {}
    for manifest in manifests:
        for record in manifest.insights:
            by_method[record.method].append(record.id)
            texts[record.id] = record.text
    if len(by_method) < 2:
        raise InsufficientInsights(
            f"need manifests from >= 2 methods, got {sorted(by_method)}"
        )
    db_description = next(
        (m.long_description for m in manifests if m.long_description), ""
    )
    pairs = sample_pairs(dict(by_method), n_comparisons, seed)
    records: list[ComparisonRecord] = []
    for (method_a, id_a), (method_b, id_b) in pairs:
        try:
            winner = llm_compare(texts[id_a], texts[id_b], db_description, gateway)
        except JudgeParseFailure as exc:
            logger.warning("judge failed on pair (%s, %s): %s", id_a, id_b, exc)
            continue
        records.append(
            ComparisonRecord(
                evaluator_id=evaluator_id,
                insight_a_id=id_a,
                insight_b_id=id_b,
                method_a=method_a,
                method_b=method_b,
                winner=winner,
                timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            )
        )
    if out_path is not None:
        write_comparisons(records, out_path)
    return records


def resolve_comparison_methods(
    records: list[ComparisonRecord], manifest_paths: list[str | Path]
) -> list[ComparisonRecord]:
    """Fill empty method fields by looking insight ids up in the manifests.

    Human annotation sheets carry only insight ids; the manifests own the
    id-to-method mapping.
    """
    method_of: dict[str, str] = {}
    for path in manifest_paths:
        for record in load_manifest(path).insights:
            method_of[record.id] = record.method
    resolved = []
    for record in records:
        method_a = record.method_a or method_of.get(record.insight_a_id, "")
        method_b = record.method_b or method_of.get(record.insight_b_id, "")
        if not method_a or not method_b:
            missing = record.insight_a_id if not method_a else record.insight_b_id
            raise UnknownMethod(f"insight {missing!r} not found in any manifest")
        resolved.append(
            ComparisonRecord(
                evaluator_id=record.evaluator_id,
                insight_a_id=record.insight_a_id,
                insight_b_id=record.insight_b_id,
                method_a=method_a,
                method_b=method_b,
                winner=record.winner,
                timestamp=record.timestamp,
            )
        )
    return resolved


def load_correctness_annotations(path: str | Path) -> dict[str, CorrectnessAnnotation]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {
        insight_id: CorrectnessAnnotation.from_values(insight_id, values)
        for insight_id, values in data.items()
    }


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def export_report(
    manifest_paths: list[str | Path],
    comparison_log_paths: list[str | Path] | None,
    correctness_path: str | Path | None,
    out_dir: str | Path,
    k: float = 8.0,
    resamples: int = 1000,
    seed: int = 0,
) -> dict[str, Path]:
    """CSV/JSON bundle: leaderboard with CIs, correctness means, dual-axis points,
    insight counts/lengths/subquestion means, and per-tag cost."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifests = [load_manifest(p) for p in manifest_paths]
    if not manifests:
        raise ValueError("need at least one manifest")

    annotations = (
        load_correctness_annotations(correctness_path) if correctness_path else {}
    )
    db_of_insight = {}
    method_db_records: dict[tuple[str, str], list[InsightRecord]] = defaultdict(list)
    for manifest in manifests:
        for record in manifest.insights:
            db_of_insight[record.id] = record.db_id
            method_db_records[(record.method, record.db_id)].append(record)

    written: dict[str, Path] = {}

    counts_rows = []
    for (method, db_id), records in sorted(method_db_records.items()):
        n = len(records)
        mean_subq = sum(len(r.answered_subquestions) for r in records) / n
        mean_chars = sum(len(r.text) for r in records) / n
        counts_rows.append([method, db_id, n, f"{mean_subq:.2f}", f"{mean_chars:.2f}"])
    written["counts"] = out / "counts.csv"
    _write_csv(
        written["counts"],
        ["method", "db_id", "insights", "mean_subquestions", "mean_chars"],
        counts_rows,
    )

    def _mean_correctness(records: list[InsightRecord]) -> float | None:
        scores = [
            correctness_score(annotations[r.id]) for r in records if r.id in annotations
        ]
        return sum(scores) / len(scores) if scores else None

    correctness_rows = []
    for (method, db_id), records in sorted(method_db_records.items()):
        mean = _mean_correctness(records)
        n_annotated = sum(1 for r in records if r.id in annotations)
        correctness_rows.append(
            [method, db_id, "" if mean is None else f"{mean:.4f}", n_annotated]
        )
    written["correctness"] = out / "correctness.csv"
    _write_csv(
        written["correctness"],
        ["method", "db_id", "mean_correctness", "annotated"],
        correctness_rows,
    )

    logs = [read_comparisons(p) for p in (comparison_log_paths or [])]
    pooled = [record for log in logs for record in log]
    methods = sorted({m for m, _db in method_db_records} | {r.method_a for r in pooled} | {r.method_b for r in pooled})
    wins: dict[str, int] = defaultdict(int)
    games: dict[str, int] = defaultdict(int)
    for record in pooled:
        games[record.method_a] += 1
        games[record.method_b] += 1
        wins[record.method_a if record.winner == "A" else record.method_b] += 1
    if pooled:
        intervals = bootstrap_ci(pooled, k=k, resamples=resamples, seed=seed)
    else:
        intervals = {m: (1000.0, 1000.0, 1000.0) for m in methods}
    leaderboard_rows = [
        [
            m,
            f"{intervals[m][0]:.2f}",
            f"{intervals[m][1]:.2f}",
            f"{intervals[m][2]:.2f}",
            wins[m],
            games[m],
        ]
        for m in methods
        if m in intervals
    ]
    written["leaderboard_csv"] = out / "leaderboard.csv"
    _write_csv(
        written["leaderboard_csv"],
        ["method", "median", "lo95", "hi95", "wins", "games"],
        leaderboard_rows,
    )
    written["leaderboard_json"] = out / "leaderboard.json"
    with open(written["leaderboard_json"], "w", encoding="utf-8") as fh:
        json.dump(
            {
                m: {
                    "median": intervals[m][0],
                    "lo95": intervals[m][1],
                    "hi95": intervals[m][2],
                    "wins": wins[m],
                    "games": games[m],
                }
                for m in methods
                if m in intervals
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    dual_rows = []
    for log in logs:
        if not log:
            continue
        log_dbs = sorted(
            {db_of_insight.get(r.insight_a_id, "") for r in log}
            | {db_of_insight.get(r.insight_b_id, "") for r in log}
        )
        db_label = "+".join(d for d in log_dbs if d) or "unknown"
        log_intervals = bootstrap_ci(log, k=k, resamples=resamples, seed=seed)
        for method, (median, _lo, _hi) in sorted(log_intervals.items()):
            records = method_db_records.get((method, db_label), [])
            mean = _mean_correctness(records) if records else None
            dual_rows.append(
                [
                    method,
                    db_label,
                    f"{normalize_insightfulness(median):.4f}",
                    "" if mean is None else f"{mean:.4f}",
                ]
            )
    written["dual_axis"] = out / "dual_axis.csv"
    _write_csv(
        written["dual_axis"],
        ["method", "db_id", "insightfulness", "correctness"],
        dual_rows,
    )

    cost_rows = []
    for manifest in manifests:
        for tag, usage in sorted(manifest.usage.items()):
            cost_rows.append(
                [manifest.method, manifest.db_id, tag, usage["calls"], f"{usage['cost']:.6f}"]
            )
        total = sum(u["cost"] for u in manifest.usage.values())
        calls = sum(u["calls"] for u in manifest.usage.values())
        cost_rows.append([manifest.method, manifest.db_id, "TOTAL", calls, f"{total:.6f}"])
    written["cost"] = out / "cost.csv"
    _write_csv(written["cost"], ["method", "db_id", "tag", "calls", "cost"], cost_rows)

    return written
