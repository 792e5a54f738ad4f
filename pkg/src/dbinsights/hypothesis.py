"""Question generation: overarching analyst questions and their SQL-sized decompositions."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from . import prompts
from .catalog import DatabaseCatalog, render_schema_text
from .errors import EmptyDecomposition, ParseFailure
from .llm import LlmGateway

logger = logging.getLogger(__name__)

MODE_FULL = "HLI"
MODE_FULL_DESCRIPTION = "HLI-wS"
MODE_DIRECT = "HLI-wH"
MODE_SERIAL = "Serial"

MAX_HIGH_LEVEL = 10
MIN_HIGH_LEVEL = 3
MAX_SUBQUESTIONS = 8  # per high-level question, to bound cost
_PARSE_ATTEMPTS = 2

_ITEM_MARKER = re.compile(r"^\s*(?:\d+[.)]\s*|[-*•]\s*)?")


@dataclass(frozen=True)
class HighLevelQuestion:
    id: str
    text: str
    source_mode: str  # MODE_FULL or MODE_FULL_DESCRIPTION

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("question text must be nonempty")
        if not self.text.endswith("?"):
            raise ValueError("question text must end with a question mark")


@dataclass(frozen=True)
class SubQuestion:
    id: str
    text: str
    parent_id: str | None = None


def parse_question_items(text: str) -> list[str]:
    """Pull question items out of a numbered, bulleted, or line-per-item list.

    A question is any item that ends with "?" after trimming the list marker
    and surrounding whitespace.
    """
    questions = []
    for line in text.splitlines():
        item = _ITEM_MARKER.sub("", line, count=1).strip()
        item = item.strip("*_").strip()
        if item.endswith("?"):
            questions.append(item)
    return questions


def generate_high_level(
    description: str, mode: str, gateway: LlmGateway
) -> list[HighLevelQuestion]:
    """Overarching questions from a database description.

    MODE_FULL expects the short description; MODE_FULL_DESCRIPTION feeds the
    complete one. The caller supplies whichever matches the mode.
    """
    if mode not in (MODE_FULL, MODE_FULL_DESCRIPTION):
        raise ValueError(f"unsupported high-level mode {mode!r}")
    prompt = prompts.fill(prompts.HIGH_LEVEL_QUESTIONS, tables_description=description)
    items: list[str] = []
    for _attempt in range(_PARSE_ATTEMPTS):
        reply = gateway.send("hl_generator", [("user", prompt)])
        items = parse_question_items(reply)
        if len(items) >= MIN_HIGH_LEVEL:
            break
        logger.warning("parsed only %d high-level questions, retrying", len(items))
    if len(items) < MIN_HIGH_LEVEL:
        raise ParseFailure(
            f"extracted {len(items)} high-level questions (need >= {MIN_HIGH_LEVEL})"
        )
    items = items[:MAX_HIGH_LEVEL]
    return [
        HighLevelQuestion(id=f"hl-{i:02d}", text=q, source_mode=mode)
        for i, q in enumerate(items, start=1)
    ]


def generate_low_level(
    hl: HighLevelQuestion, catalog: DatabaseCatalog, gateway: LlmGateway
) -> list[SubQuestion]:
    """Split one high-level question into independently answerable subquestions."""
    prompt = prompts.fill(
        prompts.LOW_LEVEL_QUESTIONS,
        tables=", ".join(catalog.table_names()),
        tables_description=catalog.long_description,
        questions=hl.text,
        schema=render_schema_text(catalog),
    )
    items: list[str] = []
    saw_content = False
    for _attempt in range(_PARSE_ATTEMPTS):
        reply = gateway.send("ll_generator", [("user", prompt)])
        saw_content = saw_content or bool(reply.strip())
        items = parse_question_items(reply)
        if items:
            break
    if not items:
        if not saw_content:
            raise EmptyDecomposition(f"no decomposition produced for {hl.id}")
        raise ParseFailure(f"no subquestions extractable for {hl.id}")
    items = items[:MAX_SUBQUESTIONS]
    return [
        SubQuestion(id=f"{hl.id}-s{j:02d}", text=q, parent_id=hl.id)
        for j, q in enumerate(items, start=1)
    ]


def generate_direct_low_level(
    catalog: DatabaseCatalog, gateway: LlmGateway
) -> list[SubQuestion]:
    """Parentless concrete questions, for the variant that skips the high-level pass."""
    prompt = prompts.fill(
        prompts.DIRECT_LOW_LEVEL_QUESTIONS,
        tables=", ".join(catalog.table_names()),
        tables_description=catalog.long_description,
        schema=render_schema_text(catalog),
    )
    items: list[str] = []
    for _attempt in range(_PARSE_ATTEMPTS):
        reply = gateway.send("direct_ll_generator", [("user", prompt)])
        items = parse_question_items(reply)
        if len(items) >= MIN_HIGH_LEVEL:
            break
        logger.warning("parsed only %d direct questions, retrying", len(items))
    if len(items) < MIN_HIGH_LEVEL:
        raise ParseFailure(
            f"extracted {len(items)} direct questions (need >= {MIN_HIGH_LEVEL})"
        )
    items = items[:MAX_HIGH_LEVEL]
    return [
        SubQuestion(id=f"sq-{i:02d}", text=q, parent_id=None)
        for i, q in enumerate(items, start=1)
    ]
