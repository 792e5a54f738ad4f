"""Aggregate verbalized answers into a short insight and iteratively remove hallucinations.

The draft is split into claims, each claim is judged against the answers it
was summarized from, and the draft is re-summarized while the resulting
consistency score stays below the bar (0.9) and the iteration budget lasts.
Consistency runs from 0 (fully contradicted) to 1 (fully supported).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from . import prompts
from .errors import EmptyResponse, ParseFailure, ScoreParseFailure
from .llm import LlmGateway

logger = logging.getLogger(__name__)

CONSISTENCY_THRESHOLD = 0.9  # tau_h
DEFAULT_MAX_ITERATIONS = 3
MAX_SENTENCES = 3
_PARSE_ATTEMPTS = 2

_ABBREVIATIONS = {
    "e.g", "i.e", "vs", "etc", "dr", "mr", "mrs", "ms", "st", "jr", "sr",
    "approx", "dept", "inc", "fig",
}
_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")
_VERDICT = re.compile(
    r"CLAIM\s*\d+\s*[:\-]?\s*(SUPPORTED|CONTRADICTED|NEUTRAL)", re.IGNORECASE
)


@dataclass(frozen=True)
class DraftInsight:
    text: str
    claims: tuple[str, ...]
    consistency: float
    iterations: int
    below_threshold: bool = False
    length_truncated: bool = False


def split_sentences(text: str) -> list[str]:
    """Sentence split on ./!/? before whitespace, skipping decimals and abbreviations."""
    boundaries = []
    for match in _SENTENCE_END.finditer(text):
        if match.group(0).startswith("."):
            word = re.search(r"[A-Za-z][\w.]*$", text[: match.start()])
            if word and word.group(0).lower().rstrip(".") in _ABBREVIATIONS:
                continue
        boundaries.append(match.end())
    sentences, prev = [], 0
    for boundary in boundaries:
        piece = text[prev:boundary].strip()
        if piece:
            sentences.append(piece)
        prev = boundary
    tail = text[prev:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _format_answers(answers: list[str]) -> str:
    return "\n".join(f"- {answer}" for answer in answers)


def summarize(question: str, answers: list[str], gateway: LlmGateway) -> str:
    """First summary draft from the kept verbalized answers."""
    if not answers:
        raise ValueError("need at least one answer to summarize")
    prompt = prompts.fill(
        prompts.SUMMARIZE_ANSWERS,
        hlquestion=question,
        low_level_answers=_format_answers(answers),
    )
    text = gateway.send("summarizer", [("user", prompt)]).strip()
    if not text:
        raise EmptyResponse("summary came back empty")
    return text


def split_claims(insight_text: str, gateway: LlmGateway) -> list[str]:
    """Break an insight into standalone checkable claims."""
    if not insight_text:
        raise ValueError("insight text must be nonempty")
    prompt = prompts.fill(prompts.SPLIT_CLAIMS, text=insight_text)
    for _attempt in range(_PARSE_ATTEMPTS):
        reply = gateway.send("claim_splitter", [("user", prompt)])
        claims = [line.strip(" -*").strip() for line in reply.splitlines()]
        claims = [c for c in claims if c]
        if claims:
            return claims
        logger.warning("claim splitter returned nothing, retrying")
    raise ParseFailure("no claims extracted from insight")


def _judge_claims(
    claims: list[str], answers: list[str], gateway: LlmGateway
) -> tuple[float, str]:
    """Per-claim verdicts against the answers; returns (score, raw judge reply).

    Score is (supported + 0.5 * neutral) / total: neutral claims are benign
    synthesis rather than contradiction, so they earn half credit.
    """
    if not claims or not answers:
        raise ValueError("claims and answers must be nonempty")
    claims_block = "\n".join(f"{i}. {claim}" for i, claim in enumerate(claims, start=1))
    prompt = prompts.fill(
        prompts.JUDGE_CLAIMS,
        answers=_format_answers(answers),
        claims=claims_block,
    )
    for _attempt in range(_PARSE_ATTEMPTS):
        reply = gateway.send("consistency_judge", [("user", prompt)])
        verdicts = [v.upper() for v in _VERDICT.findall(reply)]
        if len(verdicts) == len(claims):
            supported = verdicts.count("SUPPORTED")
            neutral = verdicts.count("NEUTRAL")
            return (supported + 0.5 * neutral) / len(claims), reply.strip()
        logger.warning(
            "judge returned %d verdicts for %d claims, retrying", len(verdicts), len(claims)
        )
    raise ScoreParseFailure("claim verdicts unparseable or miscounted")


def consistency_score(claims: list[str], answers: list[str], gateway: LlmGateway) -> float:
    score, _reasoning = _judge_claims(claims, answers, gateway)
    return score


def _reflect_once(
    summary: str, score: float, reasoning: str, answers: list[str], gateway: LlmGateway
) -> str:
    prompt = prompts.fill(
        prompts.REFLECT_SUMMARY,
        low_level_answers=_format_answers(answers),
        summary=summary,
        score=f"{score:.2f}",
        reasoning=reasoning,
    )
    text = gateway.send("reflection", [("user", prompt)]).strip()
    if not text:
        raise EmptyResponse("reflection came back empty")
    return text


def reflect_loop(
    question: str,
    answers: list[str],
    gateway: LlmGateway,
    tau_h: float = CONSISTENCY_THRESHOLD,
    maxit: int = DEFAULT_MAX_ITERATIONS,
) -> DraftInsight:
    """Summarize, then re-summarize while consistency < tau_h, up to maxit rounds.

    Never fails on non-convergence: the highest-consistency draft observed is
    returned, flagged when it is still below the bar. The final text is held
    to the sentence limit (one corrective rewrite, then a hard cut).
    """
    text = summarize(question, answers, gateway)
    claims = split_claims(text, gateway)
    score, reasoning = _judge_claims(claims, answers, gateway)
    best_text, best_claims, best_score = text, claims, score

    iterations = 0
    while score < tau_h and iterations < maxit:
        text = _reflect_once(text, score, reasoning, answers, gateway)
        claims = split_claims(text, gateway)
        score, reasoning = _judge_claims(claims, answers, gateway)
        iterations += 1
        if score > best_score:
            best_text, best_claims, best_score = text, claims, score

    length_truncated = False
    if len(split_sentences(best_text)) > MAX_SENTENCES:
        reworked = _reflect_once(
            best_text,
            best_score,
            f"The insight must be at most {MAX_SENTENCES} sentences long; rewrite it more concisely.",
            answers,
            gateway,
        )
        sentences = split_sentences(reworked)
        if len(sentences) <= MAX_SENTENCES:
            best_text = reworked
        else:
            best_text = " ".join(sentences[:MAX_SENTENCES])
            length_truncated = True
        best_claims = split_claims(best_text, gateway)
        best_score, _ = _judge_claims(best_claims, answers, gateway)

    return DraftInsight(
        text=best_text,
        claims=tuple(best_claims),
        consistency=best_score,
        iterations=iterations,
        below_threshold=best_score < tau_h,
        length_truncated=length_truncated,
    )
