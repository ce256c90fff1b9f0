"""In-memory relational database: load, validate, summarize, serialize.

A :class:`Database` is a named collection of :class:`Table` objects. Tables
are immutable by convention once loaded; every pipeline stage returns new
tables instead of mutating. Loading performs no integrity checking beyond
cell parsing, so a database with dangling foreign keys loads fine and only
:func:`validate_database` reports the problem.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import rdbc
from .columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    PRIMARY_KEY,
    VECTOR,
    ColumnData,
    ColumnSpec,
    DataError,
    SchemaError,
    TableSchema,
    key_row_index,
)

logger = logging.getLogger(__name__)


@dataclass
class Table:
    """One relation: a schema plus column data of equal length."""

    schema: TableSchema
    columns: dict[str, ColumnData]
    row_count: int

    @property
    def name(self) -> str:
        return self.schema.name

    def column(self, name: str) -> ColumnData:
        if name not in self.columns:
            raise SchemaError(f"table {self.name!r} has no column {name!r}")
        return self.columns[name]

    def timestamps(self) -> Optional[np.ndarray]:
        """Per-row event time in epoch milliseconds, NULL_TS for null."""
        tc = self.schema.time_column
        if tc is None:
            return None
        return self.columns[tc].values

    def equals(self, other: "Table") -> bool:
        if self.schema != other.schema or self.row_count != other.row_count:
            return False
        return all(self.columns[c.name].equals(other.columns[c.name])
                   for c in self.schema.columns)

    @classmethod
    def from_cells(cls, schema: TableSchema, cells: dict[str, Sequence[Any]]) -> "Table":
        declared = {c.name for c in schema.columns}
        if set(cells) != declared:
            missing = declared - set(cells)
            extra = set(cells) - declared
            raise SchemaError(
                f"table {schema.name!r}: column mismatch (missing {sorted(missing)}, "
                f"extra {sorted(extra)})"
            )
        lengths = {len(v) for v in cells.values()}
        if len(lengths) > 1:
            raise DataError(f"table {schema.name!r}: ragged columns {sorted(lengths)}")
        n = lengths.pop() if lengths else 0
        cols = {c.name: ColumnData.from_values(c, cells[c.name]) for c in schema.columns}
        return cls(schema, cols, n)


@dataclass
class Database:
    """Named collection of tables plus free-form metadata."""

    name: str
    tables: dict[str, Table]
    metadata: dict = field(default_factory=dict)

    def table(self, name: str) -> Table:
        if name not in self.tables:
            raise SchemaError(f"database {self.name!r} has no table {name!r}")
        return self.tables[name]

    def equals(self, other: "Database") -> bool:
        if self.name != other.name or set(self.tables) != set(other.tables):
            return False
        if self.metadata != other.metadata:
            return False
        return all(self.tables[t].equals(other.tables[t]) for t in self.tables)

    def with_table(self, table: Table) -> "Database":
        tables = dict(self.tables)
        tables[table.name] = table
        return Database(self.name, tables, dict(self.metadata))


@dataclass(frozen=True)
class Violation:
    """One referential integrity finding from validate_database."""

    table: str
    column: str
    row_index: int
    kind: str


def _schema_from_meta(tmeta: dict) -> TableSchema:
    if "name" not in tmeta or "columns" not in tmeta:
        raise SchemaError(f"table entry needs name and columns: {tmeta}")
    time_column = tmeta.get("time_column")
    specs = []
    for cmeta in tmeta["columns"]:
        if "name" not in cmeta or "dtype" not in cmeta:
            raise SchemaError(f"column entry needs name and dtype: {cmeta}")
        fk_target = cmeta.get("fk_target")
        if fk_target is not None:
            if isinstance(fk_target, dict):
                fk_target = (fk_target["table"], fk_target["column"])
            else:
                fk_target = (fk_target[0], fk_target[1])
        specs.append(ColumnSpec(
            name=cmeta["name"],
            dtype=cmeta["dtype"],
            fk_target=fk_target,
            is_time_column=(cmeta["name"] == time_column),
            dim=cmeta.get("dim"),
        ))
    schema = TableSchema(tmeta["name"], tuple(specs))
    if time_column is not None and schema.time_column != time_column:
        raise SchemaError(f"table {tmeta['name']!r}: time_column {time_column!r} not declared")
    return schema


def _load_csv(path: str, schema: TableSchema) -> Table:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty csv, header row required") from None
        declared = [c.name for c in schema.columns]
        if sorted(header) != sorted(declared):
            raise DataError(
                f"{path}: header {header} does not match declared columns {declared}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            rows.append(row)
    by_name = {h: [row[i] for row in rows] for i, h in enumerate(header)}
    return Table.from_cells(schema, by_name)


def _load_rdbc(path: str, schema: TableSchema) -> Table:
    with open(path, "rb") as fh:
        pairs = rdbc.read_table(fh)
    cols = dict(pairs)
    declared = [c.name for c in schema.columns]
    if sorted(cols) != sorted(declared):
        raise DataError(f"{path}: columns {sorted(cols)} do not match schema {sorted(declared)}")
    lengths = {len(c) for c in cols.values()}
    if len(lengths) > 1:
        raise DataError(f"{path}: ragged columns {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    for spec in schema.columns:
        got = cols[spec.name]
        if got.dtype != spec.dtype:
            raise DataError(
                f"{path}: column {spec.name!r} stored as {got.dtype}, declared {spec.dtype}"
            )
    return Table(schema, cols, n)


def load_database(path: str) -> Database:
    """Load a database from a metadata file or a directory containing one.

    Metadata is JSON or YAML of the shape
    ``{name, tables: [{name, source, time_column?, columns: [...]}]}`` with
    table sources resolved relative to the metadata file. Sources may be
    RFC 4180 CSV with a header row or binary ``.rdbc`` files. No integrity
    validation happens here.
    """
    meta_path = path
    if os.path.isdir(path):
        for candidate in ("metadata.json", "metadata.yaml", "metadata.yml"):
            p = os.path.join(path, candidate)
            if os.path.exists(p):
                meta_path = p
                break
        else:
            raise FileNotFoundError(f"no metadata file under {path!r}")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(meta_path)
    with open(meta_path, encoding="utf-8") as fh:
        text = fh.read()
    if meta_path.endswith((".yaml", ".yml")):
        import yaml

        meta = yaml.safe_load(text)
    else:
        try:
            meta = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{meta_path}: malformed metadata: {exc}") from exc
    if not isinstance(meta, dict) or "name" not in meta or "tables" not in meta:
        raise SchemaError(f"{meta_path}: metadata needs name and tables")
    base = os.path.dirname(os.path.abspath(meta_path))
    tables: dict[str, Table] = {}
    for tmeta in meta["tables"]:
        schema = _schema_from_meta(tmeta)
        if schema.name in tables:
            raise SchemaError(f"duplicate table {schema.name!r}")
        source = tmeta.get("source")
        if source is None:
            raise SchemaError(f"table {schema.name!r}: source file required")
        src_path = source if os.path.isabs(source) else os.path.join(base, source)
        if not os.path.exists(src_path):
            raise FileNotFoundError(src_path)
        if src_path.endswith(".rdbc"):
            tables[schema.name] = _load_rdbc(src_path, schema)
        else:
            tables[schema.name] = _load_csv(src_path, schema)
    return Database(meta["name"], tables, metadata=meta.get("metadata", {}))


def validate_database(db: Database) -> list[Violation]:
    """Report integrity violations; an empty list means the database is sound.

    Checked per table: column arity against row_count, foreign key targets
    that exist in the schema, primary key uniqueness and non-nullness, and
    foreign key values that resolve to a primary key row.
    """
    out: list[Violation] = []
    for tname in sorted(db.tables):
        table = db.tables[tname]
        for spec in table.schema.columns:
            col = table.columns.get(spec.name)
            if col is None or len(col) != table.row_count:
                out.append(Violation(tname, spec.name, -1, "arity_mismatch"))
                continue
            if spec.dtype == FOREIGN_KEY:
                target_table, target_col = spec.fk_target  # type: ignore[misc]
                target = db.tables.get(target_table)
                if target is None or not target.schema.has_column(target_col) \
                        or target.schema.column(target_col).dtype != PRIMARY_KEY:
                    out.append(Violation(tname, spec.name, -1, "missing_fk_target"))
                    continue
                rows = key_row_index(target.columns[target_col], col)
                null = col.null_mask()
                for i in np.flatnonzero((rows < 0) & ~null):
                    out.append(Violation(tname, spec.name, int(i), "dangling_foreign_key"))
            elif spec.dtype == PRIMARY_KEY:
                null = col.null_mask()
                for i in np.flatnonzero(null):
                    out.append(Violation(tname, spec.name, int(i), "null_primary_key"))
                if col.values.dtype == np.int64:
                    vals = col.values[~null]
                    _, first, counts = np.unique(vals, return_index=True, return_counts=True)
                    dup_vals = set(vals[np.sort(first[counts > 1])].tolist())
                    if dup_vals:
                        seen: set = set()
                        for i in np.flatnonzero(~null):
                            v = int(col.values[i])
                            if v in dup_vals:
                                if v in seen:
                                    out.append(Violation(tname, spec.name, int(i),
                                                         "duplicate_primary_key"))
                                seen.add(v)
                else:
                    seen_idx: dict[str, int] = {}
                    for i in np.flatnonzero(~null):
                        v = str(col.values[i])
                        if v in seen_idx:
                            out.append(Violation(tname, spec.name, int(i),
                                                 "duplicate_primary_key"))
                        else:
                            seen_idx[v] = int(i)
    return out


def column_statistics(db: Database) -> dict[str, dict[str, dict]]:
    """Per-column summaries used by transform fitting and sanity checks."""
    out: dict[str, dict[str, dict]] = {}
    for tname in sorted(db.tables):
        table = db.tables[tname]
        tstats: dict[str, dict] = {}
        for spec in table.schema.columns:
            col = table.columns[spec.name]
            null = col.null_mask()
            stats: dict[str, Any] = {"count": table.row_count, "nulls": int(null.sum())}
            ok = ~null
            if spec.dtype in (FLOAT, INT) and ok.any():
                vals = col.values[ok].astype(np.float64)
                stats.update(mean=float(vals.mean()), std=float(vals.std()),
                             min=float(vals.min()), max=float(vals.max()))
            elif spec.dtype == CATEGORICAL:
                stats["cardinality"] = len(col.dictionary or [])
                if ok.any():
                    counts = np.bincount(col.values[ok], minlength=len(col.dictionary or []))
                    top = int(np.argmax(counts))  # argmax takes the smallest code on ties
                    stats["top"] = (col.dictionary or [])[top]
                    stats["top_count"] = int(counts[top])
            elif spec.dtype == DATETIME and ok.any():
                stats.update(min=int(col.values[ok].min()), max=int(col.values[ok].max()))
            elif spec.dtype == VECTOR:
                stats["dim"] = spec.dim
            tstats[spec.name] = stats
        out[tname] = tstats
    return out


def _csv_cell(col: ColumnData, i: int, null: np.ndarray) -> str:
    if null[i]:
        return ""
    if col.dtype == CATEGORICAL:
        return (col.dictionary or [])[int(col.values[i])]
    if col.dtype == VECTOR:
        return json.dumps([float(x) for x in col.values[i]])
    if col.dtype == FLOAT:
        return repr(float(col.values[i]))
    if col.dtype in (INT, DATETIME):
        return str(int(col.values[i]))
    return str(col.values[i])


def serialize_database(db: Database, out_dir: str, fmt: str = "rdbc") -> str:
    """Write ``metadata.json`` plus one table file per relation.

    With ``fmt="rdbc"`` the round trip is exact for every dtype. CSV output
    cannot distinguish empty text from null text.
    """
    if fmt not in ("rdbc", "csv"):
        raise SchemaError(f"unknown serialization format {fmt!r}")
    os.makedirs(os.path.join(out_dir, "tables"), exist_ok=True)
    tables_meta = []
    for tname in sorted(db.tables):
        table = db.tables[tname]
        source = os.path.join("tables", f"{tname}.{fmt}")
        tmeta: dict[str, Any] = {
            "name": tname,
            "source": source,
            "columns": [c.to_dict() for c in table.schema.columns],
        }
        if table.schema.time_column is not None:
            tmeta["time_column"] = table.schema.time_column
        tables_meta.append(tmeta)
        path = os.path.join(out_dir, source)
        if fmt == "rdbc":
            with open(path, "wb") as fh:
                rdbc.write_table(fh, [(c.name, table.columns[c.name])
                                      for c in table.schema.columns])
        else:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                names = [c.name for c in table.schema.columns]
                writer.writerow(names)
                nulls = {n: table.columns[n].null_mask() for n in names}
                for i in range(table.row_count):
                    writer.writerow([_csv_cell(table.columns[n], i, nulls[n]) for n in names])
    meta = {"name": db.name, "tables": tables_meta}
    if db.metadata:
        meta["metadata"] = db.metadata
    meta_path = os.path.join(out_dir, "metadata.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta_path


def fk_row_map(db: Database, table: str, fk_column: str) -> np.ndarray:
    """Row indices into the referenced table for each row of ``table``.

    Null and dangling keys map to -1. Callers that need integrity should
    run validate_database first; this helper does not raise on dangles.
    """
    spec = db.table(table).schema.column(fk_column)
    if spec.dtype != FOREIGN_KEY or spec.fk_target is None:
        raise SchemaError(f"{table}.{fk_column} is not a foreign key")
    target_table, target_col = spec.fk_target
    return key_row_index(db.table(target_table).columns[target_col],
                         db.table(table).columns[fk_column])
