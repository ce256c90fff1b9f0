"""Binary columnar table format.

Layout, all integers little-endian:

    magic   b"RDBC"
    version u16 (currently 1)
    ncols   u32
    per column:
        name        u16 length + utf8 bytes
        dtype tag   u8 (see _TAGS)
        row_count   u64
        null mask   row_count bytes (1 = null)
        payload     dtype-specific packed values

Payloads: float and datetime are f64/i64 arrays, int is i64, categorical is
a string dictionary followed by i64 codes, text is length-prefixed utf8 per
cell, vector is a u32 dim followed by f64 row-major data, keys carry a kind
byte selecting i64 or string encoding. Writing the same column twice yields
identical bytes, which the deterministic-rerun contracts rely on.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

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
    VECTOR,
    ColumnData,
    DataError,
)

MAGIC = b"RDBC"
VERSION = 1

_TAGS = {FLOAT: 0, INT: 1, CATEGORICAL: 2, DATETIME: 3, TEXT: 4, VECTOR: 5,
         PRIMARY_KEY: 6, FOREIGN_KEY: 7}
_DTYPE_BY_TAG = {v: k for k, v in _TAGS.items()}


def _write_str(buf: BinaryIO, s: str, width: str = "<H") -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack(width, len(raw)))
    buf.write(raw)


def _read_str(buf: BinaryIO, width: str = "<H") -> str:
    (n,) = struct.unpack(width, buf.read(struct.calcsize(width)))
    return buf.read(n).decode("utf-8")


def write_column(buf: BinaryIO, name: str, col: ColumnData) -> None:
    _write_str(buf, name)
    buf.write(struct.pack("<B", _TAGS[col.dtype]))
    n = len(col)
    buf.write(struct.pack("<Q", n))
    buf.write(col.null_mask().astype(np.uint8).tobytes())
    if col.dtype == FLOAT:
        buf.write(col.values.astype("<f8").tobytes())
    elif col.dtype in (INT, DATETIME):
        buf.write(col.values.astype("<i8").tobytes())
    elif col.dtype == CATEGORICAL:
        buf.write(struct.pack("<I", len(col.dictionary or [])))
        for entry in col.dictionary or []:
            _write_str(buf, entry, "<I")
        buf.write(col.values.astype("<i8").tobytes())
    elif col.dtype == TEXT:
        for v in col.values:
            _write_str(buf, v if v is not None else "", "<I")
    elif col.dtype == VECTOR:
        buf.write(struct.pack("<I", col.dim or 0))
        buf.write(np.ascontiguousarray(col.values, dtype="<f8").tobytes())
    elif col.dtype in (PRIMARY_KEY, FOREIGN_KEY):
        if col.values.dtype == np.int64:
            buf.write(struct.pack("<B", 0))
            buf.write(col.values.astype("<i8").tobytes())
        else:
            buf.write(struct.pack("<B", 1))
            for v in col.values:
                _write_str(buf, v if v is not None else "", "<I")
    else:
        raise DataError(f"cannot serialize dtype {col.dtype!r}")


def read_column(buf: BinaryIO) -> tuple[str, ColumnData]:
    name = _read_str(buf)
    (tag,) = struct.unpack("<B", buf.read(1))
    dtype = _DTYPE_BY_TAG.get(tag)
    if dtype is None:
        raise DataError(f"unknown dtype tag {tag}")
    (n,) = struct.unpack("<Q", buf.read(8))
    mask = np.frombuffer(buf.read(n), dtype=np.uint8).astype(bool)
    if dtype == FLOAT:
        vals = np.frombuffer(buf.read(8 * n), dtype="<f8").astype(np.float64)
        vals = vals.copy()
        vals[mask] = np.nan
        return name, ColumnData(FLOAT, vals)
    if dtype in (INT, DATETIME):
        vals = np.frombuffer(buf.read(8 * n), dtype="<i8").astype(np.int64)
        if dtype == DATETIME:
            vals = vals.copy()
            vals[mask] = NULL_TS
            return name, ColumnData(DATETIME, vals)
        return name, ColumnData(INT, vals.copy(), mask=mask)
    if dtype == CATEGORICAL:
        (k,) = struct.unpack("<I", buf.read(4))
        dictionary = [_read_str(buf, "<I") for _ in range(k)]
        codes = np.frombuffer(buf.read(8 * n), dtype="<i8").astype(np.int64).copy()
        codes[mask] = -1
        return name, ColumnData(CATEGORICAL, codes, dictionary=dictionary)
    if dtype == TEXT:
        vals = np.empty(n, dtype=object)
        for i in range(n):
            s = _read_str(buf, "<I")
            vals[i] = None if mask[i] else s
        return name, ColumnData(TEXT, vals)
    if dtype == VECTOR:
        (dim,) = struct.unpack("<I", buf.read(4))
        vals = np.frombuffer(buf.read(8 * n * dim), dtype="<f8").astype(np.float64)
        return name, ColumnData(VECTOR, vals.reshape(n, dim).copy(), mask=mask, dim=dim)
    (kind,) = struct.unpack("<B", buf.read(1))
    if kind == 0:
        vals = np.frombuffer(buf.read(8 * n), dtype="<i8").astype(np.int64).copy()
        return name, ColumnData(dtype, vals, mask=mask)
    vals = np.empty(n, dtype=object)
    for i in range(n):
        s = _read_str(buf, "<I")
        vals[i] = None if mask[i] else s
    return name, ColumnData(dtype, vals, mask=mask)


def write_table(buf: BinaryIO, columns: list[tuple[str, ColumnData]]) -> None:
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    buf.write(struct.pack("<I", len(columns)))
    for name, col in columns:
        write_column(buf, name, col)


def read_table(buf: BinaryIO) -> list[tuple[str, ColumnData]]:
    magic = buf.read(4)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<H", buf.read(2))
    if version != VERSION:
        raise DataError(f"unsupported format version {version}")
    (ncols,) = struct.unpack("<I", buf.read(4))
    return [read_column(buf) for _ in range(ncols)]


def column_bytes(name: str, col: ColumnData) -> bytes:
    import io

    buf = io.BytesIO()
    write_column(buf, name, col)
    return buf.getvalue()


def column_from_bytes(raw: bytes) -> tuple[str, ColumnData]:
    import io

    return read_column(io.BytesIO(raw))
