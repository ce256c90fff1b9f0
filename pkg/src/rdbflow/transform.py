"""Column transforms applied before graph extraction or feature synthesis.

A transform run is a list of steps, each naming a kind, a ``table.column``
glob target, and kind-specific params. Fitting and application are split so
parameters learned on one database (means, dictionaries, fill values) can be
replayed bit-identically on another slice of the same schema. apply returns
a new :class:`Database`; inputs are never mutated.
"""

from __future__ import annotations

import fnmatch
import hashlib
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional

import numpy as np

from .columns import (
    CATEGORICAL,
    DATETIME,
    FLOAT,
    FOREIGN_KEY,
    INT,
    NULL_TS,
    PRIMARY_KEY,
    TEXT,
    ColumnData,
    ColumnSpec,
    ConfigError,
    SchemaError,
    TableSchema,
)
from .database import Database, Table

logger = logging.getLogger(__name__)

STEP_KINDS = (
    "normalize_numeric",
    "index_categorical",
    "expand_datetime",
    "hash_text",
    "impute",
    "make_dummy_table",
    "drop_column",
    "canonicalize_keys",
)

_STEP_PARAM_KEYS = {
    "normalize_numeric": set(),
    "index_categorical": set(),
    "expand_datetime": set(),
    "hash_text": {"buckets", "seed"},
    "impute": {"strategy"},
    "make_dummy_table": {"new_table", "pk_name"},
    "drop_column": set(),
    "canonicalize_keys": set(),
}


@dataclass(frozen=True)
class TransformStep:
    kind: str
    target: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in STEP_KINDS:
            raise ConfigError(f"unknown transform step kind {self.kind!r}")
        unknown = set(self.params) - _STEP_PARAM_KEYS[self.kind]
        if unknown:
            raise ConfigError(f"step {self.kind!r}: unknown params {sorted(unknown)}")


@dataclass(frozen=True)
class TransformConfig:
    steps: tuple[TransformStep, ...]

    @classmethod
    def from_dict(cls, raw: dict) -> "TransformConfig":
        unknown = set(raw) - {"steps"}
        if unknown:
            raise ConfigError(f"transform config: unknown keys {sorted(unknown)}")
        steps = []
        for entry in raw.get("steps", []):
            bad = set(entry) - {"kind", "target", "params"}
            if bad:
                raise ConfigError(f"transform step: unknown keys {sorted(bad)}")
            steps.append(TransformStep(entry["kind"], entry.get("target", "*.*"),
                                       dict(entry.get("params", {}))))
        return cls(tuple(steps))


def hash_text(value: str, buckets: int, seed: int) -> int:
    """Deterministic text bucket in ``[0, buckets)``; empty text is bucket 0.

    The hash is keyed blake2b, stable across platforms and processes, so the
    same (value, buckets, seed) triple always lands in the same bucket.
    Bucket 0 is reserved for the empty string.
    """
    if buckets < 1:
        raise ConfigError("hash_text needs at least one bucket")
    if value == "" or buckets == 1:
        return 0
    key = int(seed).to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(value.encode("utf-8"), digest_size=8, key=key).digest()
    return 1 + int.from_bytes(digest, "little") % (buckets - 1)


def _match_columns(db: Database, pattern: str, dtypes: Optional[tuple[str, ...]] = None
                   ) -> list[tuple[str, str]]:
    out = []
    for tname in sorted(db.tables):
        for spec in db.tables[tname].schema.columns:
            if not fnmatch.fnmatchcase(f"{tname}.{spec.name}", pattern):
                continue
            if dtypes is not None and spec.dtype not in dtypes:
                continue
            out.append((tname, spec.name))
    return out


def _rebuild(table: Table, specs: list[ColumnSpec], cols: dict[str, ColumnData]) -> Table:
    return Table(TableSchema(table.name, tuple(specs)), cols, table.row_count)


def _replace_column(table: Table, spec: ColumnSpec, data: ColumnData) -> Table:
    specs = [spec if c.name == spec.name else c for c in table.schema.columns]
    cols = dict(table.columns)
    cols[spec.name] = data
    return _rebuild(table, specs, cols)


def _append_column(table: Table, spec: ColumnSpec, data: ColumnData) -> Table:
    if table.schema.has_column(spec.name):
        raise SchemaError(f"table {table.name!r} already has column {spec.name!r}")
    specs = list(table.schema.columns) + [spec]
    cols = dict(table.columns)
    cols[spec.name] = data
    return _rebuild(table, specs, cols)


def _fit_normalize(col: ColumnData) -> dict:
    ok = ~col.null_mask()
    if not ok.any():
        return {"mean": 0.0, "std": 0.0}
    vals = col.values[ok].astype(np.float64)
    return {"mean": float(vals.mean()), "std": float(vals.std())}


def _apply_normalize(col: ColumnData, fit: dict) -> ColumnData:
    null = col.null_mask()
    out = col.values.astype(np.float64).copy()
    if fit["std"] == 0.0:
        out[:] = 0.0  # zero variance normalizes to all zeros by design
    else:
        out = (out - fit["mean"]) / fit["std"]
    out[null] = np.nan
    return ColumnData(FLOAT, out)


def _apply_index_categorical(col: ColumnData, fit: dict) -> ColumnData:
    dictionary: list[str] = fit["dictionary"]
    lookup = {v: i for i, v in enumerate(dictionary)}
    null = col.null_mask()
    codes = np.full(len(col), -1, dtype=np.int64)
    for i in np.flatnonzero(~null):
        if col.dtype == CATEGORICAL:
            v = (col.dictionary or [])[int(col.values[i])]
        else:
            v = str(col.values[i])
        codes[i] = lookup.get(v, -1)
    return ColumnData(CATEGORICAL, codes, dictionary=list(dictionary))


def _fit_index_categorical(col: ColumnData) -> dict:
    null = col.null_mask()
    if col.dtype == CATEGORICAL:
        return {"dictionary": list(col.dictionary or [])}
    values = {str(col.values[i]) for i in np.flatnonzero(~null)}
    return {"dictionary": sorted(values)}


_DATETIME_PARTS = ("year", "month", "day", "weekday", "hour")


def _expand_datetime_parts(ms: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Calendar fields (UTC) per part name; returns (values, null mask)."""
    null = ms == NULL_TS
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    parts = {p: np.zeros(len(ms), dtype=np.int64) for p in _DATETIME_PARTS}
    for i in np.flatnonzero(~null):
        dt = datetime.fromtimestamp(ms[i] / 1000.0, tz=timezone.utc)
        parts["year"][i] = dt.year
        parts["month"][i] = dt.month
        parts["day"][i] = dt.day
        parts["weekday"][i] = dt.weekday()
        parts["hour"][i] = dt.hour
    for p in _DATETIME_PARTS:
        out[p] = (parts[p], null.copy())
    return out


def _fit_impute(col: ColumnData, strategy: str) -> dict:
    ok = ~col.null_mask()
    if strategy == "mean":
        if col.dtype not in (FLOAT, INT):
            raise ConfigError("impute strategy 'mean' needs a numeric column")
        if not ok.any():
            return {"fill": 0.0}
        return {"fill": float(col.values[ok].astype(np.float64).mean())}
    if strategy == "mode":
        if col.dtype != CATEGORICAL:
            raise ConfigError("impute strategy 'mode' needs a categorical column")
        if not ok.any():
            return {"fill": -1}
        counts = np.bincount(col.values[ok], minlength=len(col.dictionary or []))
        return {"fill": int(np.argmax(counts))}
    raise ConfigError(f"unknown impute strategy {strategy!r}")


def _apply_impute(col: ColumnData, fit: dict) -> tuple[ColumnData, ColumnData]:
    null = col.null_mask()
    indicator = ColumnData(INT, null.astype(np.int64), mask=np.zeros(len(col), dtype=bool))
    if col.dtype == FLOAT:
        vals = col.values.copy()
        vals[null] = fit["fill"]
        return ColumnData(FLOAT, vals), indicator
    if col.dtype == INT:
        vals = col.values.copy()
        vals[null] = int(round(fit["fill"]))
        return ColumnData(INT, vals, mask=np.zeros(len(col), dtype=bool)), indicator
    codes = col.values.copy()
    codes[null] = fit["fill"]
    return ColumnData(CATEGORICAL, codes, dictionary=list(col.dictionary or [])), indicator


def make_dummy_table(db: Database, column_glob: str, new_table: str,
                     pk_name: str = "id") -> Database:
    """Promote pseudo-key columns to foreign keys against a fresh table.

    Collects the deduplicated union of non-null values from every column
    matching ``column_glob``, creates ``new_table`` whose single column is
    the primary key holding that union (sorted for determinism), and
    rewrites each matching source column to a foreign key referencing it.
    """
    matches = _match_columns(db, column_glob)
    if not matches:
        raise ConfigError(f"make_dummy_table: no columns match {column_glob!r}")
    if new_table in db.tables:
        raise SchemaError(f"table {new_table!r} already exists")
    values: set = set()
    all_int = True
    for tname, cname in matches:
        col = db.tables[tname].columns[cname]
        if col.dtype in (PRIMARY_KEY,):
            raise ConfigError(f"make_dummy_table: {tname}.{cname} is already a primary key")
        null = col.null_mask()
        for i in np.flatnonzero(~null):
            v = col.values[i]
            if col.dtype == CATEGORICAL:
                v = (col.dictionary or [])[int(v)]
            if isinstance(v, (int, np.integer)):
                values.add(int(v))
            else:
                s = str(v)
                try:
                    values.add(int(s))
                except ValueError:
                    all_int = False
                    values.add(s)
    if all_int:
        ordered: list = sorted(int(v) for v in values)
    else:
        ordered = sorted(str(v) for v in values)
    pk_spec = ColumnSpec(pk_name, PRIMARY_KEY)
    pk_data = ColumnData.from_values(pk_spec, ordered)
    dummy = Table(TableSchema(new_table, (pk_spec,)), {pk_name: pk_data}, len(ordered))
    out = db.with_table(dummy)
    for tname, cname in matches:
        table = out.tables[tname]
        col = table.columns[cname]
        raw = col.to_list()
        spec = ColumnSpec(cname, FOREIGN_KEY, fk_target=(new_table, pk_name))
        out = out.with_table(_replace_column(table, spec, ColumnData.from_values(spec, raw)))
    return out


def _canonicalize_keys(db: Database, pattern: str) -> Database:
    """Give each primary key domain one representation shared with its FKs."""
    out = db
    for tname, cname in _match_columns(db, pattern, dtypes=(PRIMARY_KEY,)):
        domain = [(tname, cname)]
        for other in sorted(db.tables):
            for spec in db.tables[other].schema.columns:
                if spec.dtype == FOREIGN_KEY and spec.fk_target == (tname, cname):
                    domain.append((other, spec.name))
        all_int = True
        for dt, dc in domain:
            col = out.tables[dt].columns[dc]
            if col.values.dtype == np.int64:
                continue
            null = col.null_mask()
            for i in np.flatnonzero(~null):
                try:
                    int(str(col.values[i]).strip())
                except ValueError:
                    all_int = False
                    break
            if not all_int:
                break
        for dt, dc in domain:
            table = out.tables[dt]
            col = table.columns[dc]
            spec = table.schema.column(dc)
            null = col.null_mask()
            if all_int:
                vals = np.zeros(len(col), dtype=np.int64)
                for i in np.flatnonzero(~null):
                    vals[i] = int(str(col.values[i]).strip())
                data = ColumnData(spec.dtype, vals, mask=null)
            else:
                vals = np.empty(len(col), dtype=object)
                for i in range(len(col)):
                    vals[i] = None if null[i] else str(col.values[i]).strip()
                data = ColumnData(spec.dtype, vals, mask=null)
            out = out.with_table(_replace_column(table, spec, data))
    return out


def apply_transforms(db: Database, config: TransformConfig,
                     fitted: Optional[list[dict]] = None) -> Database:
    """Run every step in order, returning a new database.

    When ``fitted`` (as produced by a previous run and stored under
    ``metadata["fitted_transforms"]``) is given, learned parameters are
    replayed instead of refit. The returned database carries the fitted
    record either way.
    """
    if fitted is not None and len(fitted) != len(config.steps):
        raise ConfigError("fitted transform record does not match the step list")
    out = db
    record: list[dict] = []
    for si, step in enumerate(config.steps):
        prior = fitted[si]["columns"] if fitted is not None else None
        step_fit: dict[str, Any] = {}
        if step.kind == "make_dummy_table":
            new_table = step.params.get("new_table")
            if not new_table:
                raise ConfigError("make_dummy_table needs params.new_table")
            out = make_dummy_table(out, step.target, new_table,
                                   pk_name=step.params.get("pk_name", "id"))
        elif step.kind == "canonicalize_keys":
            out = _canonicalize_keys(out, step.target)
        elif step.kind == "drop_column":
            referenced = {spec.fk_target
                          for t in out.tables.values() for spec in t.schema.columns
                          if spec.dtype == FOREIGN_KEY and spec.fk_target}
            for tname, cname in _match_columns(out, step.target):
                if (tname, cname) in referenced:
                    raise SchemaError(
                        f"cannot drop {tname}.{cname}: referenced by a foreign key")
                table = out.tables[tname]
                specs = [c for c in table.schema.columns if c.name != cname]
                cols = {k: v for k, v in table.columns.items() if k != cname}
                out = out.with_table(_rebuild(table, specs, cols))
        elif step.kind == "normalize_numeric":
            for tname, cname in _match_columns(out, step.target, dtypes=(FLOAT, INT)):
                table = out.tables[tname]
                col = table.columns[cname]
                fit = prior[f"{tname}.{cname}"] if prior else _fit_normalize(col)
                step_fit[f"{tname}.{cname}"] = fit
                spec = ColumnSpec(cname, FLOAT,
                                  is_time_column=table.schema.column(cname).is_time_column)
                out = out.with_table(_replace_column(table, spec, _apply_normalize(col, fit)))
        elif step.kind == "index_categorical":
            for tname, cname in _match_columns(out, step.target,
                                               dtypes=(TEXT, CATEGORICAL, INT)):
                table = out.tables[tname]
                col = table.columns[cname]
                fit = prior[f"{tname}.{cname}"] if prior else _fit_index_categorical(col)
                step_fit[f"{tname}.{cname}"] = fit
                spec = ColumnSpec(cname, CATEGORICAL)
                out = out.with_table(
                    _replace_column(table, spec, _apply_index_categorical(col, fit)))
        elif step.kind == "expand_datetime":
            for tname, cname in _match_columns(out, step.target, dtypes=(DATETIME,)):
                table = out.tables[tname]
                parts = _expand_datetime_parts(table.columns[cname].values)
                for part in _DATETIME_PARTS:
                    vals, null = parts[part]
                    spec = ColumnSpec(f"{cname}_{part}", INT)
                    table = _append_column(table, spec, ColumnData(INT, vals, mask=null))
                out = out.with_table(table)
        elif step.kind == "hash_text":
            buckets = int(step.params.get("buckets", 64))
            seed = int(step.params.get("seed", 0))
            width = max(1, len(str(buckets - 1)))
            dictionary = [f"{i:0{width}d}" for i in range(buckets)]
            for tname, cname in _match_columns(out, step.target, dtypes=(TEXT,)):
                table = out.tables[tname]
                col = table.columns[cname]
                null = col.null_mask()
                codes = np.full(len(col), -1, dtype=np.int64)
                for i in np.flatnonzero(~null):
                    codes[i] = hash_text(str(col.values[i]), buckets, seed)
                step_fit[f"{tname}.{cname}"] = {"buckets": buckets, "seed": seed}
                spec = ColumnSpec(cname, CATEGORICAL)
                out = out.with_table(_replace_column(
                    table, spec, ColumnData(CATEGORICAL, codes, dictionary=dictionary)))
        elif step.kind == "impute":
            strategy = step.params.get("strategy", "mean")
            dtypes = (FLOAT, INT) if strategy == "mean" else (CATEGORICAL,)
            for tname, cname in _match_columns(out, step.target, dtypes=dtypes):
                table = out.tables[tname]
                col = table.columns[cname]
                fit = prior[f"{tname}.{cname}"] if prior else _fit_impute(col, strategy)
                step_fit[f"{tname}.{cname}"] = fit
                filled, indicator = _apply_impute(col, fit)
                spec = table.schema.column(cname)
                table = _replace_column(table, spec, filled)
                table = _append_column(
                    table, ColumnSpec(f"{cname}_missing", INT), indicator)
                out = out.with_table(table)
        record.append({"kind": step.kind, "target": step.target,
                       "params": dict(step.params), "columns": step_fit})
    meta = dict(out.metadata)
    meta["fitted_transforms"] = record
    return Database(out.name, out.tables, meta)
