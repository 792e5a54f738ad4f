"""Independent reference implementations the real code is checked against.

These deliberately re-derive everything from the base formulas with their
own arithmetic paths; they must never import the implementations they audit.
"""

from __future__ import annotations

import math
import random


def naive_final_ratings(comparisons, k: float) -> dict[str, float]:
    """Step-by-step Elo replay using separate expectation formulas per side."""
    ratings: dict[str, float] = {}
    for record in comparisons:
        ratings.setdefault(record.method_a, 1000.0)
        ratings.setdefault(record.method_b, 1000.0)
    for record in comparisons:
        r_a, r_b = ratings[record.method_a], ratings[record.method_b]
        e_a = 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))
        e_b = 1.0 / (1.0 + 10.0 ** ((r_a - r_b) / 400.0))
        s_a = 1.0 if record.winner == "A" else 0.0
        ratings[record.method_a] = r_a + k * (s_a - e_a)
        ratings[record.method_b] = r_b + k * ((1.0 - s_a) - e_b)
    return ratings


def oracle_cells_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)
    if isinstance(a, str) and isinstance(b, str):
        return a.strip() == b.strip()
    return False


def oracle_intersection(pred_cells: list, truth_cells: list) -> int:
    """First-match greedy multiset intersection, O(n*m)."""
    remaining = list(truth_cells)
    count = 0
    for cell in pred_cells:
        for index, candidate in enumerate(remaining):
            if oracle_cells_equal(cell, candidate):
                del remaining[index]
                count += 1
                break
    return count


def oracle_precision(pred_cells: list, truth_cells: list) -> float:
    if not pred_cells:
        return 1.0 if not truth_cells else 0.0
    return oracle_intersection(pred_cells, truth_cells) / len(pred_cells)


def oracle_recall(pred_cells: list, truth_cells: list) -> float:
    if not truth_cells:
        return 1.0 if not pred_cells else 0.0
    return oracle_intersection(pred_cells, truth_cells) / len(truth_cells)


def random_result_table(rng: random.Random, max_side: int = 5):
    """Random table with values that never sit near the numeric tolerance."""
    from dbinsights.tables import ResultTable

    n_cols = rng.randint(1, max_side)
    n_rows = rng.randint(0, max_side)
    columns = [f"c{i}" for i in range(n_cols)]

    def cell():
        kind = rng.randint(0, 3)
        if kind == 0:
            return None
        if kind == 1:
            return rng.randint(0, 5)
        if kind == 2:
            return rng.choice(["alpha", "beta", "gamma", " alpha ", ""])
        return rng.choice([0.5, 1.5, 2.25, -3.75])

    rows = [[cell() for _ in range(n_cols)] for _ in range(n_rows)]
    return ResultTable(columns=columns, rows=rows)


def random_comparison_log(rng: random.Random, methods: list[str], length: int):
    from dbinsights.evaluator import ComparisonRecord

    records = []
    for index in range(length):
        method_a, method_b = rng.sample(methods, 2)
        records.append(
            ComparisonRecord(
                evaluator_id="oracle",
                insight_a_id=f"a{index}",
                insight_b_id=f"b{index}",
                method_a=method_a,
                method_b=method_b,
                winner=rng.choice(["A", "B"]),
            )
        )
    return records
