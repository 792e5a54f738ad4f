"""Materialized query results and their text/CSV renderings."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

Cell = None | int | float | str


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list[Cell]]
    truncated: bool = False

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row width {len(row)} != column count {len(self.columns)}"
                )

    def cells(self) -> list[Cell]:
        return [cell for row in self.rows for cell in row]

    def to_json(self) -> dict:
        return {"columns": self.columns, "rows": self.rows, "truncated": self.truncated}

    @classmethod
    def from_json(cls, data: dict) -> "ResultTable":
        return cls(
            columns=list(data["columns"]),
            rows=[list(r) for r in data["rows"]],
            truncated=bool(data.get("truncated", False)),
        )


def render_table(table: ResultTable) -> str:
    """Pipe-delimited rendering used inside prompts."""
    lines = [" | ".join(table.columns)]
    if not table.rows:
        lines.append("(no rows)")
    for row in table.rows:
        lines.append(" | ".join("NULL" if cell is None else str(cell) for cell in row))
    if table.truncated:
        lines.append(f"(result truncated to the first {len(table.rows)} rows)")
    return "\n".join(lines)


def _parse_cell(text: str) -> Cell:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def load_result_csv(path: str | Path) -> ResultTable:
    """Read a result table from CSV; first row is the header, empty cells are NULL."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return ResultTable(columns=[], rows=[])
        rows = [[_parse_cell(cell) for cell in row] for row in reader]
    return ResultTable(columns=header, rows=rows)


def write_result_csv(table: ResultTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow(["" if cell is None else cell for cell in row])
