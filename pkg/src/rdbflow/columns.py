"""Typed column storage for the in-memory relational engine.

Every table column is a (spec, data) pair: :class:`ColumnSpec` describes the
declared dtype and key role, :class:`ColumnData` holds the values as numpy
arrays with explicit null handling. Nulls are first class for every dtype.

Storage conventions per dtype:

* ``float``        float64, null encoded as NaN
* ``int``          int64 plus a boolean null mask
* ``categorical``  int64 codes into a lexicographically sorted dictionary,
                   null encoded as code -1
* ``datetime``     int64 milliseconds since the Unix epoch, null = NULL_TS
* ``text``         object array of ``str`` or ``None``
* ``vector``       float64 matrix of shape (rows, dim), null = masked row
* ``primary_key`` / ``foreign_key``
                   int64 plus mask when every value parses as an integer,
                   otherwise an object array of stripped strings

The sorted categorical dictionary makes interning independent of row order
and gives mode tie-breaking by smallest code the same meaning as breaking
ties by lexicographically smallest value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Iterable, Optional, Sequence

import numpy as np

FLOAT = "float"
INT = "int"
CATEGORICAL = "categorical"
DATETIME = "datetime"
TEXT = "text"
VECTOR = "vector"
PRIMARY_KEY = "primary_key"
FOREIGN_KEY = "foreign_key"

DTYPES = (FLOAT, INT, CATEGORICAL, DATETIME, TEXT, VECTOR, PRIMARY_KEY, FOREIGN_KEY)
KEY_DTYPES = (PRIMARY_KEY, FOREIGN_KEY)

#: Sentinel for a null timestamp inside int64 millisecond arrays.
NULL_TS = np.iinfo(np.int64).min


class SchemaError(ValueError):
    """Raised for malformed metadata or inconsistent column declarations."""


class DataError(ValueError):
    """Raised for cells or rows that cannot be represented under the schema."""


class ConfigError(ValueError):
    """Raised for unusable run configuration (unknown keys, bad step kinds)."""


@dataclass(frozen=True)
class ColumnSpec:
    """Declared shape of one column.

    Attributes:
        name: column identifier, unique within its table.
        dtype: one of :data:`DTYPES`.
        fk_target: ``(table, column)`` referenced by a foreign key.
        is_time_column: marks the single per-table event time column.
        dim: fixed dimensionality, vector columns only.
    """

    name: str
    dtype: str
    fk_target: Optional[tuple[str, str]] = None
    is_time_column: bool = False
    dim: Optional[int] = None

    def __post_init__(self) -> None:
        if self.dtype not in DTYPES:
            raise SchemaError(f"column {self.name!r}: unknown dtype {self.dtype!r}")
        if self.dtype == FOREIGN_KEY and self.fk_target is None:
            raise SchemaError(f"foreign key column {self.name!r} needs fk_target")
        if self.dtype != FOREIGN_KEY and self.fk_target is not None:
            raise SchemaError(f"column {self.name!r}: fk_target only valid on foreign keys")
        if self.dtype == VECTOR and (self.dim is None or self.dim <= 0):
            raise SchemaError(f"vector column {self.name!r} needs a positive dim")
        if self.is_time_column and self.dtype != DATETIME:
            raise SchemaError(f"time column {self.name!r} must have datetime dtype")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "dtype": self.dtype}
        if self.fk_target is not None:
            out["fk_target"] = list(self.fk_target)
        if self.dim is not None:
            out["dim"] = self.dim
        return out


@dataclass(frozen=True)
class TableSchema:
    """Ordered column declarations plus the optional time column."""

    name: str
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"table {self.name!r}: duplicate column names")
        time_cols = [c.name for c in self.columns if c.is_time_column]
        if len(time_cols) > 1:
            raise SchemaError(f"table {self.name!r}: more than one time column {time_cols}")
        pk_cols = [c.name for c in self.columns if c.dtype == PRIMARY_KEY]
        if len(pk_cols) > 1:
            raise SchemaError(f"table {self.name!r}: more than one primary key {pk_cols}")

    @property
    def time_column(self) -> Optional[str]:
        for c in self.columns:
            if c.is_time_column:
                return c.name
        return None

    @property
    def primary_key(self) -> Optional[str]:
        for c in self.columns:
            if c.dtype == PRIMARY_KEY:
                return c.name
        return None

    @property
    def foreign_keys(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.dtype == FOREIGN_KEY)

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"table {self.name!r} has no column {name!r}")

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)


def parse_timestamp(value: Any) -> int:
    """Parse a cell into epoch milliseconds.

    Accepts integers (already milliseconds), floats, and ISO 8601 strings.
    Naive datetimes are taken as UTC.
    """
    if isinstance(value, bool):
        raise DataError(f"cannot parse timestamp from {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            raise DataError("NaN is not a timestamp")
        return int(value)
    if isinstance(value, datetime):
        dt = value if value.tzinfo else value.replace(tzinfo=timezone.utc)
        return int(dt.timestamp() * 1000)
    if isinstance(value, str):
        s = value.strip()
        try:
            return int(s)
        except ValueError:
            pass
        try:
            dt = datetime.fromisoformat(s)
        except ValueError as exc:
            raise DataError(f"cannot parse timestamp from {value!r}") from exc
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp() * 1000)
    raise DataError(f"cannot parse timestamp from {value!r}")


def _is_null_cell(value: Any) -> bool:
    if value is None:
        return True
    if isinstance(value, float) and math.isnan(value):
        return True
    if isinstance(value, str) and value == "":
        return True
    return False


def _parse_key_values(values: Sequence[Any]) -> tuple[np.ndarray, np.ndarray]:
    """Normalize key cells to int64 when possible, else stripped strings."""
    mask = np.array([_is_null_cell(v) for v in values], dtype=bool)
    all_int = True
    for v, null in zip(values, mask):
        if null:
            continue
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            continue
        if isinstance(v, str):
            try:
                int(v.strip())
                continue
            except ValueError:
                all_int = False
                break
        all_int = False
        break
    if all_int:
        out = np.zeros(len(values), dtype=np.int64)
        for i, (v, null) in enumerate(zip(values, mask)):
            if not null:
                out[i] = int(v.strip()) if isinstance(v, str) else int(v)
        return out, mask
    out = np.empty(len(values), dtype=object)
    for i, (v, null) in enumerate(zip(values, mask)):
        out[i] = None if null else (v.strip() if isinstance(v, str) else str(v))
    return out, mask


@dataclass
class ColumnData:
    """Values of one column, stored per the module-level conventions."""

    dtype: str
    values: np.ndarray
    mask: Optional[np.ndarray] = None
    dictionary: Optional[list[str]] = None
    dim: Optional[int] = None

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, spec: ColumnSpec, raw: Sequence[Any]) -> "ColumnData":
        """Build column data from python cells (CSV strings or literals)."""
        n = len(raw)
        if spec.dtype == FLOAT:
            out = np.full(n, np.nan, dtype=np.float64)
            for i, v in enumerate(raw):
                if _is_null_cell(v):
                    continue
                try:
                    out[i] = float(v)
                except (TypeError, ValueError) as exc:
                    raise DataError(f"column {spec.name!r}: bad float cell {v!r}") from exc
            return cls(FLOAT, out)
        if spec.dtype == INT:
            vals = np.zeros(n, dtype=np.int64)
            mask = np.zeros(n, dtype=bool)
            for i, v in enumerate(raw):
                if _is_null_cell(v):
                    mask[i] = True
                    continue
                try:
                    vals[i] = int(v)
                except (TypeError, ValueError) as exc:
                    raise DataError(f"column {spec.name!r}: bad int cell {v!r}") from exc
            return cls(INT, vals, mask=mask)
        if spec.dtype == CATEGORICAL:
            present = sorted({str(v) for v in raw if not _is_null_cell(v)})
            lookup = {v: i for i, v in enumerate(present)}
            codes = np.full(n, -1, dtype=np.int64)
            for i, v in enumerate(raw):
                if not _is_null_cell(v):
                    codes[i] = lookup[str(v)]
            return cls(CATEGORICAL, codes, dictionary=present)
        if spec.dtype == DATETIME:
            vals = np.full(n, NULL_TS, dtype=np.int64)
            for i, v in enumerate(raw):
                if not _is_null_cell(v):
                    vals[i] = parse_timestamp(v)
            return cls(DATETIME, vals)
        if spec.dtype == TEXT:
            out = np.empty(n, dtype=object)
            for i, v in enumerate(raw):
                out[i] = None if _is_null_cell(v) else str(v)
            return cls(TEXT, out)
        if spec.dtype == VECTOR:
            assert spec.dim is not None
            vals = np.full((n, spec.dim), np.nan, dtype=np.float64)
            mask = np.zeros(n, dtype=bool)
            for i, v in enumerate(raw):
                if _is_null_cell(v):
                    mask[i] = True
                    continue
                if isinstance(v, str):
                    try:
                        v = json.loads(v)
                    except json.JSONDecodeError as exc:
                        raise DataError(f"column {spec.name!r}: bad vector cell") from exc
                arr = np.asarray(v, dtype=np.float64)
                if arr.shape != (spec.dim,):
                    raise DataError(
                        f"column {spec.name!r}: vector of length {arr.shape} != dim {spec.dim}"
                    )
                vals[i] = arr
            return cls(VECTOR, vals, mask=mask, dim=spec.dim)
        if spec.dtype in KEY_DTYPES:
            vals, mask = _parse_key_values(raw)
            return cls(spec.dtype, vals, mask=mask)
        raise SchemaError(f"unknown dtype {spec.dtype!r}")

    @classmethod
    def from_codes(cls, codes: np.ndarray, dictionary: list[str]) -> "ColumnData":
        return cls(CATEGORICAL, np.asarray(codes, dtype=np.int64), dictionary=list(dictionary))

    def null_mask(self) -> np.ndarray:
        """Boolean array, True where the cell is null."""
        if self.dtype == FLOAT:
            return np.isnan(self.values)
        if self.dtype == CATEGORICAL:
            return self.values < 0
        if self.dtype == DATETIME:
            return self.values == NULL_TS
        if self.dtype == TEXT:
            return np.array([v is None for v in self.values], dtype=bool)
        if self.mask is not None:
            return self.mask.copy()
        return np.zeros(len(self.values), dtype=bool)

    def take(self, indices: np.ndarray) -> "ColumnData":
        """Gather rows; a negative index yields a null cell."""
        idx = np.asarray(indices, dtype=np.int64)
        neg = idx < 0
        safe = np.where(neg, 0, idx)
        vals = self.values[safe]
        mask = self.mask[safe].copy() if self.mask is not None else None
        if neg.any():
            if self.dtype == FLOAT:
                vals = vals.copy()
                vals[neg] = np.nan
            elif self.dtype == CATEGORICAL:
                vals = vals.copy()
                vals[neg] = -1
            elif self.dtype == DATETIME:
                vals = vals.copy()
                vals[neg] = NULL_TS
            elif self.dtype == TEXT:
                vals = vals.copy()
                vals[neg] = None
            else:
                if mask is None:
                    mask = np.zeros(len(idx), dtype=bool)
                mask |= neg
                if self.dtype == VECTOR:
                    vals = vals.copy()
                    vals[neg] = np.nan
        return ColumnData(self.dtype, vals, mask=mask, dictionary=self.dictionary, dim=self.dim)

    def to_list(self) -> list:
        """Python cells with ``None`` for nulls (categoricals decoded)."""
        null = self.null_mask()
        out: list[Any] = []
        for i in range(len(self.values)):
            if null[i]:
                out.append(None)
            elif self.dtype == CATEGORICAL:
                out.append(self.dictionary[int(self.values[i])])
            elif self.dtype == VECTOR:
                out.append([float(x) for x in self.values[i]])
            elif self.dtype == FLOAT:
                out.append(float(self.values[i]))
            elif self.dtype in (INT, DATETIME):
                out.append(int(self.values[i]))
            elif self.dtype in KEY_DTYPES and self.values.dtype == np.int64:
                out.append(int(self.values[i]))
            else:
                out.append(self.values[i])
        return out

    def equals(self, other: "ColumnData") -> bool:
        if self.dtype != other.dtype or len(self) != len(other):
            return False
        if self.dtype == CATEGORICAL and self.dictionary != other.dictionary:
            return False
        if self.dtype == VECTOR and self.dim != other.dim:
            return False
        a_null, b_null = self.null_mask(), other.null_mask()
        if not np.array_equal(a_null, b_null):
            return False
        ok = ~a_null
        if self.dtype == FLOAT:
            return bool(np.array_equal(self.values[ok], other.values[ok]))
        if self.dtype == VECTOR:
            return bool(np.array_equal(self.values[ok], other.values[ok]))
        if self.dtype == TEXT or self.values.dtype == object or other.values.dtype == object:
            if self.values.dtype != other.values.dtype:
                return False
            return all(
                str(self.values[i]) == str(other.values[i])
                for i in np.flatnonzero(ok)
            )
        return bool(np.array_equal(self.values[ok], other.values[ok]))

    def copy(self) -> "ColumnData":
        return ColumnData(
            self.dtype,
            self.values.copy(),
            mask=None if self.mask is None else self.mask.copy(),
            dictionary=None if self.dictionary is None else list(self.dictionary),
            dim=self.dim,
        )


def key_row_index(pk: ColumnData, fk: ColumnData) -> np.ndarray:
    """Map foreign key cells to row indices of the referenced primary key.

    Returns int64 indices with -1 for null or dangling keys. Works for the
    int64 and string key representations alike; mixed representations fall
    back to string comparison.
    """
    fk_null = fk.null_mask()
    pk_null = pk.null_mask()
    if pk.values.dtype == np.int64 and fk.values.dtype == np.int64:
        pk_vals = pk.values
        order = np.argsort(pk_vals, kind="stable")
        sorted_vals = pk_vals[order]
        pos = np.searchsorted(sorted_vals, fk.values)
        pos = np.clip(pos, 0, len(sorted_vals) - 1) if len(sorted_vals) else pos
        out = np.full(len(fk.values), -1, dtype=np.int64)
        if len(sorted_vals):
            hit = sorted_vals[pos] == fk.values
            out[hit] = order[pos[hit]]
        out[fk_null] = -1
        if pk_null.any():
            bad = np.flatnonzero(pk_null)
            out[np.isin(out, bad)] = -1
        return out
    lookup: dict[str, int] = {}
    for i in range(len(pk.values)):
        if not pk_null[i]:
            lookup.setdefault(str(pk.values[i]), i)
    out = np.full(len(fk.values), -1, dtype=np.int64)
    for i in range(len(fk.values)):
        if not fk_null[i]:
            out[i] = lookup.get(str(fk.values[i]), -1)
    return out
