"""Answer subquestions with generated SQL: guarded execution, verbalization, score gating."""

from __future__ import annotations

import logging
import re
import sqlite3
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import prompts
from .catalog import DatabaseCatalog, render_schema_text
from .errors import (
    AgentExhausted,
    EmptyResponse,
    ForbiddenStatement,
    QueryTimeout,
    ScoreParseFailure,
    SqlError,
)
from .hypothesis import SubQuestion
from .llm import LlmGateway
from .tables import ResultTable, render_table

logger = logging.getLogger(__name__)

ANSWER_SCORE_THRESHOLD = 0.7  # tau_a: both relevance and answerability must reach it
DEFAULT_MAX_RETRIES = 3
DEFAULT_ROW_LIMIT = 20
DEFAULT_TIMEOUT_S = 10.0
_SCORE_ATTEMPTS = 2

# Keywords that may never appear in a guarded statement, even mid-query
# (WITH ... DELETE is a single valid statement in SQLite, so checking the
# first keyword alone is not enough).
_FORBIDDEN = re.compile(
    r"\b(insert|update|delete|drop|alter|create|attach|detach|pragma|vacuum"
    r"|reindex|truncate|grant|revoke|merge|begin|commit|rollback|savepoint)\b",
    re.IGNORECASE,
)
_FIRST_WORD = re.compile(r"\s*([A-Za-z_]+)")
_FENCED_SQL = re.compile(r"```(?:sql)?\s*\n(.*?)```", re.DOTALL | re.IGNORECASE)
_INLINE_SQL = re.compile(r"\b(select|with)\b", re.IGNORECASE)

_ALLOWED_AUTH_OPS = {
    sqlite3.SQLITE_SELECT,
    sqlite3.SQLITE_READ,
    sqlite3.SQLITE_FUNCTION,
    getattr(sqlite3, "SQLITE_RECURSIVE", 33),
}


def _skeleton(sql: str) -> str:
    """Blank out string literals, quoted identifiers, and comments.

    Keyword checks run on the skeleton so data values can never trip the
    guard and quoting can never hide a statement from it.
    """
    out: list[str] = []
    i, n = 0, len(sql)
    while i < n:
        ch = sql[i]
        if ch in ("'", '"', "`"):
            quote = ch
            i += 1
            while i < n:
                if sql[i] == quote:
                    if i + 1 < n and sql[i + 1] == quote:
                        i += 2
                        continue
                    i += 1
                    break
                i += 1
            out.append(" ")
        elif ch == "[":
            end = sql.find("]", i + 1)
            i = n if end == -1 else end + 1
            out.append(" ")
        elif ch == "-" and sql.startswith("--", i):
            end = sql.find("\n", i)
            i = n if end == -1 else end + 1
            out.append(" ")
        elif ch == "/" and sql.startswith("/*", i):
            end = sql.find("*/", i + 2)
            i = n if end == -1 else end + 2
            out.append(" ")
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def ensure_select_only(sql: str) -> None:
    """Raise ForbiddenStatement unless sql is a single SELECT (or WITH...SELECT)."""
    if not sql or not sql.strip():
        raise ForbiddenStatement("empty statement")
    body = _skeleton(sql).strip()
    if not body:
        raise ForbiddenStatement("statement is only comments or literals")
    if body.endswith(";"):
        body = body[:-1]
    if ";" in body:
        raise ForbiddenStatement("multiple statements are not allowed")
    match = _FIRST_WORD.match(body)
    first = match.group(1).lower() if match else ""
    if first not in ("select", "with"):
        raise ForbiddenStatement(f"only SELECT statements are allowed, got {first.upper() or sql.strip()[:20]!r}")
    hit = _FORBIDDEN.search(body)
    if hit:
        raise ForbiddenStatement(f"forbidden keyword {hit.group(0).upper()} in statement")


def _authorizer(action: int, *_args: object) -> int:
    return sqlite3.SQLITE_OK if action in _ALLOWED_AUTH_OPS else sqlite3.SQLITE_DENY


def _cell_value(value: object) -> object:
    return value.hex() if isinstance(value, bytes) else value


def execute_readonly(
    sql: str,
    db_path: str | Path,
    row_limit: int = DEFAULT_ROW_LIMIT,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> ResultTable:
    """Run one guarded SELECT against a read-only connection.

    Results are cut at row_limit (flagged as truncated); execution is
    aborted once timeout_s of wall time has passed.
    """
    ensure_select_only(sql)
    conn = sqlite3.connect(f"file:{Path(db_path)}?mode=ro", uri=True)
    try:
        conn.set_authorizer(_authorizer)
        deadline = time.monotonic() + timeout_s
        conn.set_progress_handler(lambda: 1 if time.monotonic() > deadline else 0, 1000)
        try:
            cursor = conn.execute(sql)
            rows = cursor.fetchmany(row_limit + 1)
        except sqlite3.Warning as exc:
            raise ForbiddenStatement(str(exc)) from exc
        except sqlite3.OperationalError as exc:
            message = str(exc)
            if "interrupt" in message.lower():
                raise QueryTimeout(f"query exceeded {timeout_s}s") from exc
            if "not authorized" in message.lower():
                raise ForbiddenStatement(message) from exc
            raise SqlError(message) from exc
        except sqlite3.DatabaseError as exc:
            raise SqlError(str(exc)) from exc
        columns = [d[0] for d in cursor.description or []]
        truncated = len(rows) > row_limit
        kept = rows[:row_limit]
        return ResultTable(
            columns=columns,
            rows=[[_cell_value(v) for v in row] for row in kept],
            truncated=truncated,
        )
    finally:
        conn.close()


def extract_sql(reply: str) -> str | None:
    """SQL from an LLM reply: prefer a fenced block, else the first SELECT/WITH."""
    fenced = _FENCED_SQL.search(reply)
    if fenced:
        candidate = fenced.group(1).strip()
        if candidate:
            return candidate
    match = _INLINE_SQL.search(reply)
    if match:
        return reply[match.start():].strip()
    return None


@dataclass(frozen=True)
class AnsweredSubquestion:
    subquestion: SubQuestion
    sql: str
    result: ResultTable
    verbalization: str
    relevance: float
    answerability: float
    attempts: int
    kept: bool

    def to_json(self) -> dict:
        return {
            "subquestion": {
                "id": self.subquestion.id,
                "text": self.subquestion.text,
                "parent_id": self.subquestion.parent_id,
            },
            "sql": self.sql,
            "result": self.result.to_json(),
            "verbalization": self.verbalization,
            "relevance": self.relevance,
            "answerability": self.answerability,
            "attempts": self.attempts,
            "kept": self.kept,
        }

    @classmethod
    def from_json(cls, data: dict) -> "AnsweredSubquestion":
        sub = data["subquestion"]
        return cls(
            subquestion=SubQuestion(id=sub["id"], text=sub["text"], parent_id=sub.get("parent_id")),
            sql=data["sql"],
            result=ResultTable.from_json(data["result"]),
            verbalization=data["verbalization"],
            relevance=data["relevance"],
            answerability=data["answerability"],
            attempts=data["attempts"],
            kept=data["kept"],
        )


def verbalize_result(sq: SubQuestion, result: ResultTable, gateway: LlmGateway) -> str:
    prompt = prompts.fill(
        prompts.VERBALIZE_RESULT,
        question=sq.text,
        result_table=render_table(result),
    )
    text = gateway.send("verbalizer", [("user", prompt)]).strip()
    if not text:
        raise EmptyResponse(f"empty verbalization for {sq.id}")
    return text


_RELEVANCE = re.compile(r"RELEVANCE\s*[:=]\s*([0-9]*\.?[0-9]+)", re.IGNORECASE)
_ANSWERABILITY = re.compile(r"ANSWERABILITY\s*[:=]\s*([0-9]*\.?[0-9]+)", re.IGNORECASE)


def validate_answer(
    sq: SubQuestion, verbalization: str, gateway: LlmGateway
) -> tuple[float, float]:
    """Judge relevance and answerability of a verbalized answer, both in [0, 1]."""
    if not verbalization:
        raise ValueError("verbalization must be nonempty")
    prompt = prompts.fill(prompts.VALIDATE_ANSWER, question=sq.text, answer=verbalization)
    for _attempt in range(_SCORE_ATTEMPTS):
        reply = gateway.send("answer_validator", [("user", prompt)])
        rel_match = _RELEVANCE.search(reply)
        ans_match = _ANSWERABILITY.search(reply)
        if rel_match and ans_match:
            relevance = float(rel_match.group(1))
            answerability = float(ans_match.group(1))
            if 0.0 <= relevance <= 1.0 and 0.0 <= answerability <= 1.0:
                return relevance, answerability
        logger.warning("unparseable answer scores for %s, retrying", sq.id)
    raise ScoreParseFailure(f"could not parse answer scores for {sq.id}")


def answer_subquestion(
    sq: SubQuestion,
    catalog: DatabaseCatalog,
    db_path: str | Path,
    gateway: LlmGateway,
    max_retries: int = DEFAULT_MAX_RETRIES,
    row_limit: int = DEFAULT_ROW_LIMIT,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    score_threshold: float = ANSWER_SCORE_THRESHOLD,
    on_attempt: Callable[[int, str, str | None], None] | None = None,
) -> AnsweredSubquestion:
    """Generate-execute-repair loop for one subquestion.

    Execution errors are fed back verbatim so the model can rewrite the
    query; after max_retries repairs the subquestion is abandoned.
    on_attempt, when given, receives (attempt, sql, error) per execution
    so callers can keep a full SQL transcript.
    """
    system = prompts.fill(
        prompts.SQL_AGENT_SYSTEM, dialect="SQLite", top_k=row_limit
    )
    user = (
        f"Database description:\n{catalog.long_description}\n\n"
        f"Schema:\n{render_schema_text(catalog)}\n"
        f"Question: {sq.text}"
    )
    messages: list[tuple[str, str]] = [("system", system), ("user", user)]
    last_error = ""
    attempts = 0
    for attempt in range(1, max_retries + 2):
        attempts = attempt
        reply = gateway.send("sql_agent", messages)
        sql = extract_sql(reply)
        if sql is None:
            last_error = "No SQL query found in the reply."
            if on_attempt is not None:
                on_attempt(attempt, "", last_error)
        else:
            try:
                result = execute_readonly(sql, db_path, row_limit, timeout_s)
            except (ForbiddenStatement, SqlError, QueryTimeout) as exc:
                last_error = str(exc)
                if on_attempt is not None:
                    on_attempt(attempt, sql, last_error)
            else:
                if on_attempt is not None:
                    on_attempt(attempt, sql, None)
                verbalization = verbalize_result(sq, result, gateway)
                relevance, answerability = validate_answer(sq, verbalization, gateway)
                return AnsweredSubquestion(
                    subquestion=sq,
                    sql=sql,
                    result=result,
                    verbalization=verbalization,
                    relevance=relevance,
                    answerability=answerability,
                    attempts=attempts,
                    kept=relevance >= score_threshold and answerability >= score_threshold,
                )
        logger.info("attempt %d for %s failed: %s", attempt, sq.id, last_error)
        messages = messages + [
            ("assistant", reply),
            ("user", f"Error: {last_error}\nRewrite the query and try again."),
        ]
    raise AgentExhausted(
        f"subquestion {sq.id} failed after {attempts} attempts: {last_error}",
        attempts=attempts,
        last_error=last_error,
    )
