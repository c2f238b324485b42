"""CSV ingestion and result output.

Dialect: UTF-8, comma separated, optional header row, empty field = null,
dates as YYYY-MM-DD, decimals as plain digit strings.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import IO, Iterable, Optional, Union

import numpy as np

from ..dtypes import Kind, Schema, days_to_date, format_decimal, literal_to_physical
from ..errors import ParseError, TypeMismatch
from .batch import DEFAULT_BATCH_ROWS, Batch, Table
from .column import Column


def _convert(field_type, texts: list[str], col_no: int, row_base: int) -> Column:
    kind = field_type.kind
    mask = np.fromiter((t != "" for t in texts), dtype=bool, count=len(texts))
    if kind is Kind.STRING:
        return Column.from_strings([t if t != "" else None for t in texts], mask)
    fast = None
    try:
        if kind is Kind.INT64:
            arr = np.array([t if t != "" else "0" for t in texts])
            fast = arr.astype(np.int64) if len(texts) else np.zeros(0, np.int64)
        elif kind is Kind.FLOAT64:
            arr = np.array([t if t != "" else "0" for t in texts])
            fast = arr.astype(np.float64) if len(texts) else np.zeros(0)
            if not np.isfinite(fast).all():
                fast = None
        elif kind is Kind.DATE32:
            arr = np.array([t if t != "" else "1970-01-01" for t in texts], dtype="datetime64[D]")
            if all(len(t) == 10 for t in texts if t):
                fast = arr.astype(np.int64).astype(np.int32)
    except ValueError:
        fast = None
    if fast is not None:
        return Column.from_numpy(field_type, fast, mask)
    # slow path: per value, which also pinpoints the failing cell
    vals = []
    for i, t in enumerate(texts):
        if t == "":
            vals.append(None)
            continue
        try:
            if kind is Kind.DATE32 and len(t) != 10:
                raise TypeMismatch(t)
            v = literal_to_physical(field_type, t)
            if kind is Kind.FLOAT64 and not math.isfinite(v):
                raise TypeMismatch(t)
        except TypeMismatch:
            raise ParseError(f"cannot parse {t!r} as {field_type}", row=row_base + i, column=col_no) from None
        vals.append(v)
    return Column.from_pylist(field_type, vals)


def read_csv(
    source: Union[str, Path, IO[str]],
    schema: Schema,
    name: str = "",
    header: bool = False,
    batch_rows: int = DEFAULT_BATCH_ROWS,
) -> Table:
    """Parse CSV text into a sealed table. Rows are numbered from 1 in errors."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as f:
            return read_csv(f, schema, name, header, batch_rows)
    reader = csv.reader(source)
    ncols = len(schema)
    first_row = 1
    if header:
        next(reader, None)
        first_row = 2
    columns: list[list[str]] = [[] for _ in range(ncols)]
    for i, rec in enumerate(reader):
        if not rec:
            continue
        if len(rec) != ncols:
            raise ParseError(f"expected {ncols} fields, found {len(rec)}", row=first_row + i)
        for j, v in enumerate(rec):
            columns[j].append(v)
    cols = [_convert(f.dtype, columns[j], j + 1, first_row) for j, f in enumerate(schema)]
    nrows = len(columns[0]) if ncols else 0
    batch = Batch(cols, nrows, schema.types)
    return Table.from_batch(name, schema, batch, batch_rows)


def format_value(dtype, v) -> str:
    if v is None:
        return ""
    k = dtype.kind
    if k is Kind.DECIMAL:
        return format_decimal(v, dtype.scale)
    if k is Kind.DATE32:
        return days_to_date(v)
    if k is Kind.BOOL:
        return "true" if v else "false"
    if k is Kind.FLOAT64:
        return repr(float(v))
    return str(v)


def format_rows(table: Table) -> Iterable[list[str]]:
    types = table.types
    for b in table.batches:
        cols = [c.to_pylist() for c in b.columns]
        for r in range(b.row_count):
            yield [format_value(types[j], cols[j][r]) for j in range(len(types))]


def write_csv(table: Table, out: Optional[IO[str]] = None, header: bool = True) -> str:
    """Write in the ingestion dialect; returns the text when ``out`` is None."""
    buf = out if out is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(table.schema.names)
    for row in format_rows(table):
        w.writerow(row)
    return buf.getvalue() if out is None else ""
