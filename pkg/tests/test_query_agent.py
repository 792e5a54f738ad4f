import hashlib
import sqlite3

import pytest

from dbinsights.catalog import introspect
from dbinsights.errors import (
    AgentExhausted,
    ForbiddenStatement,
    QueryTimeout,
    ScoreParseFailure,
    SqlError,
)
from dbinsights.hypothesis import SubQuestion
from dbinsights.query_agent import (
    answer_subquestion,
    ensure_select_only,
    execute_readonly,
    extract_sql,
    validate_answer,
    verbalize_result,
)
from dbinsights.tables import ResultTable

import mockkit
from sql_corpus import ALLOWED_CASES, FORBIDDEN_CASES


def _file_hash(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_select_one(schools_db):
    table = execute_readonly("SELECT 1", schools_db)
    assert table.columns == ["1"]
    assert table.rows == [[1]]
    assert table.truncated is False


def test_drop_rejected(schools_db):
    with pytest.raises(ForbiddenStatement):
        execute_readonly("DROP TABLE schools", schools_db)


def test_guard_rejects_full_corpus(schools_db):
    rejected = 0
    for sql in FORBIDDEN_CASES:
        try:
            execute_readonly(sql, schools_db)
        except ForbiddenStatement:
            rejected += 1
    assert rejected == len(FORBIDDEN_CASES)


def test_guard_accepts_legitimate_selects(schools_db):
    for sql in ALLOWED_CASES:
        execute_readonly(sql, schools_db)


def test_guard_empty_statement():
    with pytest.raises(ForbiddenStatement):
        ensure_select_only("   ")
    with pytest.raises(ForbiddenStatement):
        ensure_select_only("-- nothing but a comment")


def test_row_limit_truncates(tmp_path):
    db = tmp_path / "wide.db"
    conn = sqlite3.connect(db)
    conn.execute("CREATE TABLE t (x INT)")
    conn.executemany("INSERT INTO t VALUES (?)", [(i,) for i in range(100)])
    conn.commit()
    conn.close()
    table = execute_readonly("SELECT * FROM t", db, row_limit=20)
    assert len(table.rows) == 20
    assert table.truncated is True


def test_sql_error_surfaces_engine_message(schools_db):
    with pytest.raises(SqlError, match="no such table"):
        execute_readonly("SELECT * FROM missing_table", schools_db)


def test_timeout_interrupts_runaway_query(schools_db):
    runaway = (
        "WITH RECURSIVE spin(n) AS (SELECT 1 UNION ALL SELECT n + 1 FROM spin) "
        "SELECT COUNT(*) FROM spin"
    )
    with pytest.raises(QueryTimeout):
        execute_readonly(runaway, schools_db, timeout_s=0.2)


def test_database_never_mutated(schools_db):
    before = _file_hash(schools_db)
    for sql in FORBIDDEN_CASES:
        try:
            execute_readonly(sql, schools_db)
        except ForbiddenStatement:
            pass
    execute_readonly("SELECT * FROM schools", schools_db)
    assert _file_hash(schools_db) == before


def test_extract_sql_prefers_fenced_block():
    reply = "Here you go:\n```sql\nSELECT 1\n```\nHope that helps."
    assert extract_sql(reply) == "SELECT 1"
    plain_fence = "```\nSELECT 2\n```"
    assert extract_sql(plain_fence) == "SELECT 2"


def test_extract_sql_inline_fallback():
    assert extract_sql("Sure: SELECT County FROM schools") == "SELECT County FROM schools"
    assert extract_sql("with c as (select 1) select * from c").startswith("with")
    assert extract_sql("No query to be found here.") is None


@pytest.fixture
def fixture_catalog(schools_db):
    catalog = introspect(schools_db)
    catalog.long_description = mockkit.LONG_DESC
    catalog.short_description = mockkit.SHORT_DESC
    return catalog


def _agent_gateway(mock_gateway, sq_text, *sql_replies):
    """Queue sql_agent replies: later entries require an error re-prompt."""
    for i, reply in enumerate(reversed(sql_replies)):
        position = len(sql_replies) - 1 - i
        if position == 0:
            mock_gateway.backend.add_rule("sql_agent", reply, when=lambda c: "Error:" not in c)
        else:
            needed = position
            mock_gateway.backend.add_rule(
                "sql_agent", reply, when=lambda c, n=needed: c.count("Error:") == n
            )
    mock_gateway.backend.add_rule("verbalizer", "The answer is 455.0.")
    mock_gateway.backend.add_rule("answer_validator", "RELEVANCE: 0.9\nANSWERABILITY: 0.8")
    return mock_gateway


def test_agent_first_try(schools_db, fixture_catalog, mock_gateway):
    sq = SubQuestion(id="s1", text=mockkit.SUB_Q1A)
    gateway = _agent_gateway(mock_gateway, sq.text, f"```sql\n{mockkit.SQL_Q1A}\n```")
    answered = answer_subquestion(sq, fixture_catalog, schools_db, gateway)
    assert answered.attempts == 1
    assert answered.kept is True
    assert answered.result.rows == [[455.0]]


def test_agent_repairs_after_error(schools_db, fixture_catalog, mock_gateway):
    sq = SubQuestion(id="s2", text=mockkit.SUB_Q2A)
    gateway = _agent_gateway(
        mock_gateway,
        sq.text,
        f"```sql\n{mockkit.SQL_Q2A_BROKEN}\n```",
        f"```sql\n{mockkit.SQL_Q2A}\n```",
    )
    answered = answer_subquestion(sq, fixture_catalog, schools_db, gateway)
    assert answered.attempts == 2
    repair_request = gateway.backend.requests_for("sql_agent")[1]
    joined = "\n".join(m.content for m in repair_request.messages)
    assert "no such table: tests_by_county" in joined
    assert "Rewrite the query and try again." in joined


def test_agent_exhausted_after_max_retries(schools_db, fixture_catalog, mock_gateway):
    sq = SubQuestion(id="s3", text="What is the total of nothing?")
    mock_gateway.backend.add_rule("sql_agent", "```sql\nSELECT * FROM void_table\n```")
    with pytest.raises(AgentExhausted) as exc_info:
        answer_subquestion(sq, fixture_catalog, schools_db, mock_gateway, max_retries=3)
    assert exc_info.value.attempts == 4
    assert len(mock_gateway.backend.requests_for("sql_agent")) == 4


def test_agent_counts_unparseable_reply_as_failure(schools_db, fixture_catalog, mock_gateway):
    sq = SubQuestion(id="s4", text="Anything?")
    mock_gateway.backend.add_rule("sql_agent", "I cannot answer that.")
    with pytest.raises(AgentExhausted):
        answer_subquestion(sq, fixture_catalog, schools_db, mock_gateway, max_retries=1)
    retry = mock_gateway.backend.requests_for("sql_agent")[1]
    assert "No SQL query found" in retry.messages[-1].content


def test_verbalize_passthrough(mock_gateway):
    sq = SubQuestion(id="s5", text="How many rows?")
    mock_gateway.backend.add_rule("verbalizer", "There are 42 rows.")
    table = ResultTable(columns=["n"], rows=[[42]])
    text = verbalize_result(sq, table, mock_gateway)
    assert "42" in text
    prompt = mock_gateway.backend.calls[0].messages[0].content
    assert "n\n42" in prompt.replace(" | ", "|").replace("|", "\n") or "42" in prompt


def test_verbalize_empty_result(mock_gateway):
    sq = SubQuestion(id="s6", text="Which schools closed?")
    mock_gateway.backend.add_rule("verbalizer", "No rows matched the question.")
    table = ResultTable(columns=["School"], rows=[])
    assert verbalize_result(sq, table, mock_gateway) == "No rows matched the question."
    assert "(no rows)" in mock_gateway.backend.calls[0].messages[0].content


def test_verbalize_truncated_notice(mock_gateway):
    sq = SubQuestion(id="s7", text="List everything?")
    mock_gateway.backend.add_rule("verbalizer", "Twenty rows shown.")
    table = ResultTable(columns=["x"], rows=[[i] for i in range(20)], truncated=True)
    verbalize_result(sq, table, mock_gateway)
    prompt = mock_gateway.backend.calls[0].messages[0].content
    assert "truncated to the first 20 rows" in prompt


def test_validate_answer_scores(mock_gateway):
    sq = SubQuestion(id="s8", text="Q?")
    mock_gateway.backend.add_rule("answer_validator", "RELEVANCE: 0.9\nANSWERABILITY: 0.8")
    assert validate_answer(sq, "some answer", mock_gateway) == (0.9, 0.8)


def test_validate_answer_unparseable(mock_gateway):
    sq = SubQuestion(id="s9", text="Q?")
    mock_gateway.backend.add_rule("answer_validator", "looks great to me!")
    with pytest.raises(ScoreParseFailure):
        validate_answer(sq, "some answer", mock_gateway)
    assert len(mock_gateway.backend.calls) == 2


def test_validate_answer_out_of_range_rejected(mock_gateway):
    sq = SubQuestion(id="s10", text="Q?")
    mock_gateway.backend.add_rule("answer_validator", "RELEVANCE: 1.5\nANSWERABILITY: 0.8")
    with pytest.raises(ScoreParseFailure):
        validate_answer(sq, "some answer", mock_gateway)


def test_kept_flag_thresholds(schools_db, fixture_catalog, mock_gateway):
    sq = SubQuestion(id="s11", text=mockkit.SUB_Q3B)
    mock_gateway.backend.add_rule("sql_agent", f"```sql\n{mockkit.SQL_Q3B}\n```")
    mock_gateway.backend.add_rule("verbalizer", mockkit.VERB_Q3B)
    mock_gateway.backend.add_rule("answer_validator", "RELEVANCE: 0.9\nANSWERABILITY: 0.6")
    answered = answer_subquestion(sq, fixture_catalog, schools_db, mock_gateway)
    assert answered.kept is False
    assert answered.relevance == 0.9
    assert answered.answerability == 0.6
