"""Fixed-schema batches and sealed tables."""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from ..dtypes import DataType, Field, Kind, Schema
from ..errors import SchemaMismatch
from .column import Column, SelectionVector, gather, pack_validity

DEFAULT_BATCH_ROWS = 65_536


class Batch:
    """Columns of equal length; the unit pushed through pipelines."""

    __slots__ = ("schema", "columns", "row_count")

    def __init__(self, columns: Sequence[Column], row_count: Optional[int] = None, schema=None):
        self.columns = list(columns)
        if row_count is None:
            row_count = self.columns[0].length if self.columns else 0
        self.row_count = int(row_count)
        self.schema = tuple(schema) if schema is not None else tuple(c.dtype for c in self.columns)
        for c, t in zip(self.columns, self.schema):
            if c.length != self.row_count:
                raise SchemaMismatch(f"column length {c.length} != batch row count {self.row_count}")
            if c.dtype != t:
                raise SchemaMismatch(f"column type {c.dtype} != schema type {t}")
        if len(self.schema) != len(self.columns):
            raise SchemaMismatch("schema arity differs from column count")

    @classmethod
    def empty(cls, types: Sequence[DataType]) -> "Batch":
        return cls([Column.from_pylist(t, []) for t in types], 0, types)

    @classmethod
    def from_rows(cls, types: Sequence[DataType], rows: Iterable[Sequence]) -> "Batch":
        rows = list(rows)
        cols = [Column.from_pylist(t, [r[i] for r in rows]) for i, t in enumerate(types)]
        return cls(cols, len(rows), types)

    def column(self, i: int) -> Column:
        return self.columns[i]

    @property
    def nbytes(self) -> int:
        return sum(c.nbytes for c in self.columns)

    def take(self, s: SelectionVector) -> "Batch":
        return Batch([gather(c, s) for c in self.columns], len(s), self.schema)

    def slice(self, start: int, stop: int) -> "Batch":
        stop = min(stop, self.row_count)
        start = min(start, stop)
        return Batch([c.slice(start, stop) for c in self.columns], stop - start, self.schema)

    def select(self, ordinals: Sequence[int]) -> "Batch":
        return Batch([self.columns[i] for i in ordinals], self.row_count, [self.schema[i] for i in ordinals])

    def chunks(self, size: int) -> list["Batch"]:
        if self.row_count <= size:
            return [self]
        return [self.slice(i, i + size) for i in range(0, self.row_count, size)]

    def to_rows(self) -> list[tuple]:
        cols = [c.to_pylist() for c in self.columns]
        return list(zip(*cols)) if cols else [()] * self.row_count

    def equals(self, other: "Batch") -> bool:
        return (
            self.row_count == other.row_count
            and self.schema == other.schema
            and all(a.equals(b) for a, b in zip(self.columns, other.columns))
        )

    def __repr__(self):
        return f"Batch(rows={self.row_count}, schema={list(self.schema)})"


def concat_columns(cols: Sequence[Column]) -> Column:
    dtype = cols[0].dtype
    if len(cols) == 1:
        return cols[0]
    n = sum(c.length for c in cols)
    any_nulls = any(c.validity is not None for c in cols)
    mask = np.concatenate([c.mask for c in cols]) if any_nulls else None
    if dtype.kind is Kind.STRING:
        offsets = np.zeros(n + 1, dtype="<i8")
        pos, base = 1, 0
        for c in cols:
            offsets[pos:pos + c.length] = c.offsets[1:] + base
            pos += c.length
            base += int(c.offsets[-1])
        data = np.concatenate([c.data for c in cols]) if cols else np.empty(0, np.uint8)
        out = Column(dtype, n, offsets=offsets, data=data)
        if mask is not None:
            out.validity = pack_validity(mask)
            out._mask = mask
        return out
    return Column.from_numpy(dtype, np.concatenate([c.values for c in cols]), mask)


def concat_batches(batches: Sequence[Batch], schema: Optional[Sequence[DataType]] = None) -> Batch:
    """Concatenate batches with identical schemas, preserving row order."""
    batches = list(batches)
    if not batches:
        if schema is None:
            raise SchemaMismatch("cannot concatenate zero batches without a schema")
        return Batch.empty(schema)
    first = batches[0].schema
    if schema is not None and tuple(schema) != first:
        raise SchemaMismatch(f"expected schema {list(schema)}, got {list(first)}")
    for b in batches[1:]:
        if b.schema != first:
            raise SchemaMismatch(f"schema mismatch: {list(first)} vs {list(b.schema)}")
    if len(batches) == 1:
        return batches[0]
    total = sum(b.row_count for b in batches)
    cols = [concat_columns([b.columns[i] for b in batches]) for i in range(len(first))]
    return Batch(cols, total, first)


class Table:
    """A named, schema-carrying list of sealed batches."""

    def __init__(self, name: str, schema: Schema, batches: Sequence[Batch] = ()):
        self.name = name
        self.schema = Schema(schema)
        types = tuple(self.schema.types)
        self.batches = []
        for b in batches:
            if b.schema != types:
                raise SchemaMismatch(f"batch schema {list(b.schema)} does not match table {list(types)}")
            self.batches.append(b)

    @classmethod
    def from_batch(cls, name: str, schema: Schema, batch: Batch, batch_rows: int = DEFAULT_BATCH_ROWS) -> "Table":
        return cls(name, schema, batch.chunks(batch_rows) if batch.row_count else [])

    @classmethod
    def from_rows(cls, name: str, schema: Schema, rows, batch_rows: int = DEFAULT_BATCH_ROWS) -> "Table":
        return cls.from_batch(name, schema, Batch.from_rows(Schema(schema).types, rows), batch_rows)

    @property
    def types(self) -> tuple:
        return tuple(self.schema.types)

    @property
    def num_rows(self) -> int:
        return sum(b.row_count for b in self.batches)

    @property
    def nbytes(self) -> int:
        return sum(b.nbytes for b in self.batches)

    def to_batch(self) -> Batch:
        return concat_batches(self.batches, self.types)

    def rechunk(self, batch_rows: int) -> "Table":
        return Table.from_batch(self.name, self.schema, self.to_batch(), batch_rows)

    def slice_rows(self, start: int, stop: int, name: Optional[str] = None) -> "Table":
        b = self.to_batch().slice(start, stop)
        return Table(name or self.name, self.schema, [b] if b.row_count else [])

    def to_rows(self) -> list[tuple]:
        return self.to_batch().to_rows()

    def column_values(self, i: int) -> list:
        return self.to_batch().columns[i].to_pylist()

    def renamed(self, name: str) -> "Table":
        return Table(name, self.schema, self.batches)

    def __repr__(self):
        return f"Table({self.name!r}, rows={self.num_rows}, columns={self.schema.names})"


def with_fields(schema: Sequence[Field]) -> Schema:
    return Schema(schema)
