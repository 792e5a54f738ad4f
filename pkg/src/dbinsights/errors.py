"""Exception types shared across the pipeline."""

from __future__ import annotations


class DbInsightsError(Exception):
    """Base class for all pipeline errors."""


class NotADatabase(DbInsightsError):
    """The file exists but is not a readable SQLite database."""


class EmptyDatabase(DbInsightsError):
    """The database contains no user tables."""


class BackendError(DbInsightsError):
    """A remote chat backend failed after all retry attempts."""

    def __init__(self, message: str, status: int | None = None, body: str = "", attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.body = body
        self.attempts = attempts


class MockMiss(DbInsightsError):
    """The scripted mock has no entry for a (tag, content-hash) pair."""

    def __init__(self, tag: str, content_hash: str):
        super().__init__(f"mock has no entry for tag={tag!r} hash={content_hash}")
        self.tag = tag
        self.content_hash = content_hash


class EmptyResponse(DbInsightsError):
    """The backend returned an empty completion where text was required."""


class TooLong(DbInsightsError):
    """A short description kept exceeding the line budget after retrying."""


class ParseFailure(DbInsightsError):
    """Structured content could not be extracted from a completion."""


class EmptyDecomposition(DbInsightsError):
    """Question decomposition produced no subquestions."""


class ForbiddenStatement(DbInsightsError):
    """The SQL statement is not a single read-only SELECT."""


class SqlError(DbInsightsError):
    """The database engine rejected the query."""


class QueryTimeout(DbInsightsError):
    """Query execution exceeded the wall-clock budget."""


class AgentExhausted(DbInsightsError):
    """The query agent ran out of repair attempts for a subquestion."""

    def __init__(self, message: str, attempts: int = 0, last_error: str = ""):
        super().__init__(message)
        self.attempts = attempts
        self.last_error = last_error


class ScoreParseFailure(DbInsightsError):
    """A judge response did not contain the expected numeric scores."""


class JudgeParseFailure(DbInsightsError):
    """A pairwise judge response named neither candidate."""


class UnknownMethod(DbInsightsError):
    """A comparison references a method missing from the rating table."""


class InsufficientInsights(DbInsightsError):
    """Not enough insights across methods to sample comparison pairs."""


class EmptyAnnotation(DbInsightsError):
    """A correctness annotation carries no claim scores."""
