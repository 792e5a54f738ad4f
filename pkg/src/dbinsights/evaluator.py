"""Insightfulness and correctness scoring.

Insightfulness is operationalized as an Elo rating over pairwise
comparisons (initial rating 1000, zero-sum updates), with bootstrap
confidence intervals taken over random re-orderings of the comparison log.
Correctness is the mean truth value of an insight's claims, with fractional
values for claims whose subclaims are only partly right. The two combine
into a weighted harmonic mean.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import prompts
from .errors import (
    EmptyAnnotation,
    InsufficientInsights,
    JudgeParseFailure,
    UnknownMethod,
)
from .llm import LlmGateway

logger = logging.getLogger(__name__)

INITIAL_RATING = 1000.0
DEFAULT_K = 4.0
CI_K = 8.0  # wider, more legible intervals for bootstrap plots
DEFAULT_RESAMPLES = 1000
_JUDGE_ATTEMPTS = 2


def elo_expected(r_a: float, r_b: float) -> float:
    """Win probability for the first rating: 1 / (1 + 10^((r_b - r_a)/400))."""
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))


def elo_update(r_a: float, r_b: float, winner: str, k: float) -> tuple[float, float]:
    """One zero-sum rating update; winner is "A" or "B"."""
    if k <= 0:
        raise ValueError("k-factor must be positive")
    if winner not in ("A", "B"):
        raise ValueError(f"winner must be 'A' or 'B', got {winner!r}")
    s_a = 1.0 if winner == "A" else 0.0
    delta = k * (s_a - elo_expected(r_a, r_b))
    return r_a + delta, r_b - delta


@dataclass(frozen=True)
class ComparisonRecord:
    evaluator_id: str
    insight_a_id: str
    insight_b_id: str
    method_a: str
    method_b: str
    winner: str  # "A" | "B"
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.insight_a_id == self.insight_b_id:
            raise ValueError("a comparison needs two distinct insights")
        if self.winner not in ("A", "B"):
            raise ValueError(f"winner must be 'A' or 'B', got {self.winner!r}")

    def to_json(self) -> dict:
        return {
            "evaluator_id": self.evaluator_id,
            "insight_a_id": self.insight_a_id,
            "insight_b_id": self.insight_b_id,
            "method_a": self.method_a,
            "method_b": self.method_b,
            "winner": self.winner,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ComparisonRecord":
        return cls(
            evaluator_id=data["evaluator_id"],
            insight_a_id=data["insight_a_id"],
            insight_b_id=data["insight_b_id"],
            method_a=data["method_a"],
            method_b=data["method_b"],
            winner=data["winner"],
            timestamp=data.get("timestamp", ""),
        )


@dataclass
class EloLeaderboard:
    ratings: dict[str, float]
    k_factor: float
    history: list[tuple[int, dict[str, float]]] = field(default_factory=list)

    def ranking(self) -> list[tuple[str, float]]:
        return sorted(self.ratings.items(), key=lambda kv: (-kv[1], kv[0]))

    def top(self) -> str:
        return self.ranking()[0][0]


def run_tournament(
    comparisons: list[ComparisonRecord],
    k: float = DEFAULT_K,
    methods: list[str] | None = None,
    keep_history: bool = True,
) -> EloLeaderboard:
    """Apply updates sequentially in list order, starting everyone at 1000."""
    ratings: dict[str, float] = {}
    if methods is not None:
        ratings = {m: INITIAL_RATING for m in methods}
    else:
        for record in comparisons:
            ratings.setdefault(record.method_a, INITIAL_RATING)
            ratings.setdefault(record.method_b, INITIAL_RATING)
    board = EloLeaderboard(ratings=ratings, k_factor=k)
    for index, record in enumerate(comparisons):
        if record.method_a not in ratings or record.method_b not in ratings:
            missing = record.method_a if record.method_a not in ratings else record.method_b
            raise UnknownMethod(f"comparison {index} references unknown method {missing!r}")
        r_a, r_b = ratings[record.method_a], ratings[record.method_b]
        ratings[record.method_a], ratings[record.method_b] = elo_update(
            r_a, r_b, record.winner, k
        )
        if keep_history:
            board.history.append((index, dict(ratings)))
    return board


def sample_pairs(
    insights: dict[str, list[str]],
    n: int,
    seed: int,
) -> list[tuple[tuple[str, str], tuple[str, str]]]:
    """n uniform pairs of (method, insight_id), the two sides from distinct methods."""
    pool = [(method, iid) for method, ids in sorted(insights.items()) for iid in ids]
    methods_present = {method for method, _ in pool}
    if len(pool) < 2 or len(methods_present) < 2:
        raise InsufficientInsights(
            f"need insights from >= 2 methods, got {len(methods_present)} with {len(pool)} insights"
        )
    rng = random.Random(seed)
    pairs = []
    for _ in range(n):
        first = rng.choice(pool)
        others = [entry for entry in pool if entry[0] != first[0]]
        second = rng.choice(others)
        pairs.append((first, second))
    return pairs


def _parse_choice(reply: str) -> str | None:
    one = re.search(r"insight\s*1", reply, re.IGNORECASE)
    two = re.search(r"insight\s*2", reply, re.IGNORECASE)
    if one and not two:
        return "A"
    if two and not one:
        return "B"
    return None


def _judge_once(
    template: str,
    tag: str,
    first: str,
    second: str,
    db_description: str,
    gateway: LlmGateway,
) -> str:
    prompt = prompts.fill(
        template,
        tables_description=db_description,
        insight1=first,
        insight2=second,
    )
    for _attempt in range(_JUDGE_ATTEMPTS):
        reply = gateway.send(tag, [("user", prompt)])
        choice = _parse_choice(reply)
        if choice is not None:
            return choice
        logger.warning("judge reply named no single insight, retrying")
    raise JudgeParseFailure("judge reply named no single insight after retrying")


def llm_compare(
    insight_a: str,
    insight_b: str,
    db_description: str,
    gateway: LlmGateway,
) -> str:
    """Pairwise insightfulness verdict, "A" or "B".

    Each pair is judged once per presentation order; a disagreement is
    settled by a third, differently phrased call. This cancels the position
    bias single-order judging is prone to.
    """
    if not insight_a or not insight_b:
        raise ValueError("both insights must be nonempty")
    forward = _judge_once(
        prompts.COMPARE_INSIGHTS, "insight_judge", insight_a, insight_b, db_description, gateway
    )
    backward = _judge_once(
        prompts.COMPARE_INSIGHTS, "insight_judge", insight_b, insight_a, db_description, gateway
    )
    backward_as_ab = "A" if backward == "B" else "B"
    if forward == backward_as_ab:
        return forward
    return _judge_once(
        prompts.COMPARE_INSIGHTS_TIEBREAK,
        "insight_judge_tiebreak",
        insight_a,
        insight_b,
        db_description,
        gateway,
    )


def bootstrap_ci(
    comparisons: list[ComparisonRecord],
    k: float = CI_K,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> dict[str, tuple[float, float, float]]:
    """Per-method (median, lo95, hi95) of final ratings over comparison re-orderings.

    Each resample permutes the comparison list and replays the tournament;
    the intervals are the 2.5/50/97.5 percentiles of the final ratings.
    """
    if resamples < 100:
        raise ValueError("resamples must be >= 100")
    if not comparisons:
        raise InsufficientInsights("no comparisons to bootstrap")
    methods = sorted(
        {r.method_a for r in comparisons} | {r.method_b for r in comparisons}
    )
    rng = np.random.default_rng(seed)
    finals = np.empty((resamples, len(methods)))
    records = list(comparisons)
    for i in range(resamples):
        order = rng.permutation(len(records))
        shuffled = [records[j] for j in order]
        board = run_tournament(shuffled, k=k, methods=methods, keep_history=False)
        finals[i] = [board.ratings[m] for m in methods]
    lo, mid, hi = np.percentile(finals, [2.5, 50.0, 97.5], axis=0)
    return {m: (float(mid[j]), float(lo[j]), float(hi[j])) for j, m in enumerate(methods)}


@dataclass(frozen=True)
class CorrectnessAnnotation:
    insight_id: str
    claim_scores: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        for score in self.claim_scores:
            if not 0 <= score <= 1:
                raise ValueError(f"claim score {score} outside [0, 1]")

    @classmethod
    def from_values(cls, insight_id: str, values: list) -> "CorrectnessAnnotation":
        """Accepts ints, floats, "a/b" strings, and (a, b) pairs."""
        scores = []
        for value in values:
            if isinstance(value, str):
                scores.append(Fraction(value))
            elif isinstance(value, (tuple, list)):
                scores.append(Fraction(int(value[0]), int(value[1])))
            else:
                scores.append(Fraction(value).limit_denominator(10**9))
        return cls(insight_id=insight_id, claim_scores=tuple(scores))


def correctness_score(annotation: CorrectnessAnnotation) -> float:
    """Mean claim truth value, computed in exact rational arithmetic."""
    if not annotation.claim_scores:
        raise EmptyAnnotation(f"no claim scores for {annotation.insight_id}")
    total = sum(annotation.claim_scores, Fraction(0))
    return float(total / len(annotation.claim_scores))


def objective_score(insightfulness: float, correctness: float, alpha: float = 0.5) -> float:
    """Weighted harmonic mean of the two scores; zero if either is zero."""
    for name, value in (("insightfulness", insightfulness), ("correctness", correctness)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {value}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if insightfulness == 0.0 or correctness == 0.0:
        return 0.0
    return 1.0 / (alpha / insightfulness + (1.0 - alpha) / correctness)


def normalize_insightfulness(rating: float) -> float:
    """Map an Elo rating onto [0, 1] via the logistic against the 1000 baseline."""
    return elo_expected(rating, INITIAL_RATING)


def write_comparisons(records: list[ComparisonRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def read_comparisons(path: str | Path) -> list[ComparisonRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ComparisonRecord.from_json(json.loads(line)))
    return records


def read_human_comparisons_csv(path: str | Path, evaluator_id: str = "human") -> list[ComparisonRecord]:
    """Import a human annotation sheet: columns insight_1, insight_2, Best_Insight (1/2).

    Optional method_1/method_2 columns carry method identity; otherwise the
    insight ids must be resolvable downstream.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            best = str(row["Best_Insight"]).strip()
            if best not in ("1", "2"):
                raise ValueError(f"Best_Insight must be 1 or 2, got {best!r}")
            records.append(
                ComparisonRecord(
                    evaluator_id=evaluator_id,
                    insight_a_id=row["insight_1"],
                    insight_b_id=row["insight_2"],
                    method_a=row.get("method_1", ""),
                    method_b=row.get("method_2", ""),
                    winner="A" if best == "1" else "B",
                )
            )
    return records
