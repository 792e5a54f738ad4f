"""Database catalog: schema introspection, sample rows, LLM descriptions."""

from __future__ import annotations

import json
import logging
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .errors import EmptyDatabase, EmptyResponse, NotADatabase, TooLong
from .llm import LlmGateway

logger = logging.getLogger(__name__)

SAMPLE_ROW_COUNT = 3
SHORT_DESCRIPTION_MAX_LINES = 5  # the prompt asks for 3; only gross violations are rejected
_SHORTEN_ATTEMPTS = 2


@dataclass(frozen=True)
class ColumnInfo:
    name: str
    declared_type: str
    is_primary_key: bool


@dataclass(frozen=True)
class ForeignKey:
    from_column: str
    to_table: str
    to_column: str


@dataclass(frozen=True)
class TableSchema:
    table_name: str
    columns: tuple[ColumnInfo, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate column names in table {self.table_name!r}")

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass
class DatabaseCatalog:
    db_id: str
    tables: list[TableSchema]
    sample_rows: dict[str, list[list[str]]]
    long_description: str = ""
    short_description: str = ""

    def validate(self) -> None:
        by_name = {t.table_name: t for t in self.tables}
        for table in self.tables:
            for fk in table.foreign_keys:
                target = by_name.get(fk.to_table)
                if target is None:
                    raise ValueError(
                        f"foreign key {table.table_name}.{fk.from_column} references "
                        f"missing table {fk.to_table!r}"
                    )
                if fk.to_column and fk.to_column not in target.column_names():
                    raise ValueError(
                        f"foreign key {table.table_name}.{fk.from_column} references "
                        f"missing column {fk.to_table}.{fk.to_column}"
                    )

    def table_names(self) -> list[str]:
        return sorted(t.table_name for t in self.tables)


def _quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _cell_text(value: object) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bytes):
        return value.hex()
    return str(value)


def introspect(db_path: str | Path) -> DatabaseCatalog:
    """Enumerate user tables with columns, keys, and min(3, rows) sample rows each.

    Views are skipped. Descriptions are left empty for a later pass.
    """
    path = Path(db_path)
    if not path.is_file():
        raise FileNotFoundError(f"no such database file: {path}")
    conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
    try:
        try:
            rows = conn.execute(
                "SELECT name FROM sqlite_master"
                " WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name"
            ).fetchall()
        except sqlite3.DatabaseError as exc:
            raise NotADatabase(f"{path}: {exc}") from exc
        table_names = [r[0] for r in rows]
        if not table_names:
            raise EmptyDatabase(f"{path} has no user tables")

        tables: list[TableSchema] = []
        samples: dict[str, list[list[str]]] = {}
        pk_by_table: dict[str, list[str]] = {}
        for name in table_names:
            cols = []
            for _cid, col_name, col_type, _notnull, _default, pk in conn.execute(
                f"PRAGMA table_info({_quote_ident(name)})"
            ):
                cols.append(ColumnInfo(col_name, col_type or "", bool(pk)))
            pk_by_table[name] = [c.name for c in cols if c.is_primary_key]
            fks = []
            for _id, _seq, to_table, from_col, to_col, *_rest in conn.execute(
                f"PRAGMA foreign_key_list({_quote_ident(name)})"
            ):
                fks.append(ForeignKey(from_col, to_table, to_col or ""))
            tables.append(TableSchema(name, tuple(cols), tuple(fks)))
            fetched = conn.execute(
                f"SELECT * FROM {_quote_ident(name)} LIMIT {SAMPLE_ROW_COUNT}"
            ).fetchall()
            samples[name] = [[_cell_text(v) for v in row] for row in fetched]

        # An FK declared against the referenced table's implicit primary key
        # comes back with a NULL target column; resolve it here.
        resolved = []
        for table in tables:
            fks = tuple(
                fk if fk.to_column else ForeignKey(
                    fk.from_column, fk.to_table,
                    (pk_by_table.get(fk.to_table) or [""])[0],
                )
                for fk in table.foreign_keys
            )
            resolved.append(TableSchema(table.table_name, table.columns, fks))
    finally:
        conn.close()

    catalog = DatabaseCatalog(db_id=path.stem, tables=resolved, sample_rows=samples)
    catalog.validate()
    return catalog


def _render_declaration(table: TableSchema) -> str:
    lines = [f"CREATE TABLE {_quote_ident(table.table_name)} ("]
    pk_cols = [c.name for c in table.columns if c.is_primary_key]
    parts = []
    for col in table.columns:
        decl = f"    {_quote_ident(col.name)} {col.declared_type}".rstrip()
        if col.is_primary_key and len(pk_cols) == 1:
            decl += " PRIMARY KEY"
        parts.append(decl)
    if len(pk_cols) > 1:
        parts.append("    PRIMARY KEY (" + ", ".join(_quote_ident(c) for c in pk_cols) + ")")
    for fk in table.foreign_keys:
        parts.append(
            f"    FOREIGN KEY ({_quote_ident(fk.from_column)}) "
            f"REFERENCES {_quote_ident(fk.to_table)} ({_quote_ident(fk.to_column)})"
        )
    lines.append(",\n".join(parts))
    lines.append(");")
    return "\n".join(lines)


def _render_samples(table: TableSchema, rows: list[list[str]]) -> str:
    lines = [f"/* {len(rows)} sample rows from {table.table_name}:"]
    lines.append(" | ".join(table.column_names()))
    for row in rows:
        lines.append(" | ".join(row))
    lines.append("*/")
    return "\n".join(lines)


def render_schema_text(catalog: DatabaseCatalog) -> str:
    """Deterministic schema text: per table (name order), declaration then sample block."""
    blocks = []
    for table in sorted(catalog.tables, key=lambda t: t.table_name):
        blocks.append(_render_declaration(table))
        blocks.append(_render_samples(table, catalog.sample_rows.get(table.table_name, [])))
    return "\n\n".join(blocks) + "\n"


def render_declarations(catalog: DatabaseCatalog) -> str:
    return "\n\n".join(
        _render_declaration(t) for t in sorted(catalog.tables, key=lambda t: t.table_name)
    )


def render_sample_rows(catalog: DatabaseCatalog) -> str:
    return "\n\n".join(
        _render_samples(t, catalog.sample_rows.get(t.table_name, []))
        for t in sorted(catalog.tables, key=lambda t: t.table_name)
    )


def generate_description(catalog: DatabaseCatalog, gateway: LlmGateway) -> str:
    """Fill in the long natural-language description (kept if already present)."""
    if catalog.long_description:
        return catalog.long_description
    prompt = prompts.fill(
        prompts.DESCRIBE_DATABASE,
        db_schema=render_declarations(catalog),
        db_sample_rows=render_sample_rows(catalog),
    )
    text = gateway.send("db_description", [("user", prompt)]).strip()
    if not text:
        raise EmptyResponse("database description came back empty")
    catalog.long_description = text
    return text


def shorten_description(long_description: str, gateway: LlmGateway) -> str:
    """Condense the long description to a few lines; reject gross overshoots."""
    if not long_description:
        raise ValueError("long description must be nonempty")
    prompt = prompts.fill(prompts.SHORTEN_DESCRIPTION, tables_description=long_description)
    last_lines = 0
    for _attempt in range(_SHORTEN_ATTEMPTS):
        text = gateway.send("short_description", [("user", prompt)]).strip()
        if not text:
            raise EmptyResponse("short description came back empty")
        lines = [line for line in text.splitlines() if line.strip()]
        last_lines = len(lines)
        if last_lines <= SHORT_DESCRIPTION_MAX_LINES:
            return text
        logger.warning("short description had %d lines, retrying", last_lines)
    raise TooLong(f"short description still {last_lines} lines after retrying")


def load_sidecar_description(db_path: str | Path) -> str | None:
    """Human-written description override from `<db>.json` next to the database."""
    sidecar = Path(db_path).with_suffix(".json")
    if not sidecar.is_file():
        return None
    with open(sidecar, encoding="utf-8") as fh:
        data = json.load(fh)
    description = data.get("description")
    return description if isinstance(description, str) and description.strip() else None


def build_catalog(
    db_path: str | Path,
    gateway: LlmGateway,
    need_short: bool = True,
    use_sidecar: bool = True,
) -> DatabaseCatalog:
    """Introspect plus descriptions, honoring a sidecar override."""
    catalog = introspect(db_path)
    if use_sidecar:
        override = load_sidecar_description(db_path)
        if override:
            catalog.long_description = override
    generate_description(catalog, gateway)
    if need_short:
        catalog.short_description = shorten_description(catalog.long_description, gateway)
    return catalog
