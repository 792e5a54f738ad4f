"""Bag-of-cells similarity between result tables.

Tables are compared as multisets of cell values, so neither row order nor
column order affects any metric. Text cells are trimmed, NULL is its own
value, and numbers match within a small relative tolerance. Duplicated
values stay meaningful (multiset, not set): aggregates legitimately repeat.

The headline score is the harmonic mean of cell-precision and cell-recall.
It is a similarity (1 = identical contents) despite the "distance" name its
callers use for the quantity being minimized.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .tables import Cell, ResultTable

REL_TOL = 1e-9
ABS_TOL = 1e-12

_NULL = object()


def _numbers_equal(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=REL_TOL, abs_tol=ABS_TOL)


def _normalize(cell: Cell) -> object:
    if cell is None:
        return _NULL
    if isinstance(cell, bool):
        return int(cell)
    if isinstance(cell, (int, float)):
        return cell
    return cell.strip()


@dataclass(frozen=True)
class CellBag:
    """Normalized multiset of a table's cells."""

    exact: Counter  # NULL sentinel and trimmed text, hash-comparable
    numbers: tuple[float, ...]

    @classmethod
    def from_table(cls, table: ResultTable) -> "CellBag":
        exact: Counter = Counter()
        numbers: list[float] = []
        for cell in table.cells():
            value = _normalize(cell)
            if isinstance(value, (int, float)):
                numbers.append(float(value))
            else:
                exact[value] += 1
        return cls(exact=exact, numbers=tuple(numbers))

    def __len__(self) -> int:
        return sum(self.exact.values()) + len(self.numbers)


def _intersection_size(pred: CellBag, truth: CellBag) -> int:
    count = sum((pred.exact & truth.exact).values())
    unused = list(truth.numbers)
    for value in pred.numbers:
        for i, candidate in enumerate(unused):
            if _numbers_equal(value, candidate):
                del unused[i]
                count += 1
                break
    return count


def cell_precision(pred: ResultTable, truth: ResultTable) -> float:
    """Fraction of predicted cells present in the truth table (multiset)."""
    pred_bag = CellBag.from_table(pred)
    truth_bag = CellBag.from_table(truth)
    if len(pred_bag) == 0:
        return 1.0 if len(truth_bag) == 0 else 0.0
    return _intersection_size(pred_bag, truth_bag) / len(pred_bag)


def cell_recall(pred: ResultTable, truth: ResultTable) -> float:
    """Fraction of truth cells recovered by the prediction (multiset)."""
    pred_bag = CellBag.from_table(pred)
    truth_bag = CellBag.from_table(truth)
    if len(truth_bag) == 0:
        return 1.0 if len(pred_bag) == 0 else 0.0
    return _intersection_size(pred_bag, truth_bag) / len(truth_bag)


def distance(pred: ResultTable, truth: ResultTable) -> float:
    """Harmonic mean of cell-precision and cell-recall, 0 when both vanish."""
    p = cell_precision(pred, truth)
    r = cell_recall(pred, truth)
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)
