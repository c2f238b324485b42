"""Columns with LSB-first validity bitmaps, and row selection vectors."""
from __future__ import annotations

from typing import Any, Iterable, Optional, Sequence

import numpy as np

from ..dtypes import STRING, DataType, Kind
from ..errors import IndexOutOfRange, IndexOverflow

NARROW_LIMIT = 2**31 - 1
WIDE_SENTINEL = np.uint64(2**64 - 1)
NARROW_SENTINEL = np.int32(-1)


def pack_validity(mask: np.ndarray) -> np.ndarray:
    return np.packbits(mask.astype(bool, copy=False), bitorder="little")


def unpack_validity(bitmap: np.ndarray, length: int) -> np.ndarray:
    return np.unpackbits(bitmap, count=length, bitorder="little").astype(bool)


class Column:
    """An immutable column.

    Fixed-width types keep a contiguous ``values`` array; STRING keeps
    64-bit ``offsets`` (length + 1 entries) and a ``data`` byte buffer.
    ``validity`` is None when every row is valid. Null slots always hold a
    zero value (or an empty string) so equal columns are bitwise equal.
    """

    __slots__ = ("dtype", "length", "validity", "values", "offsets", "data", "_mask", "_strings")

    def __init__(self, dtype: DataType, length: int, validity=None, values=None, offsets=None, data=None):
        self.dtype = dtype
        self.length = int(length)
        self.validity = validity
        self.values = values
        self.offsets = offsets
        self.data = data
        self._mask = None
        self._strings = None

    # construction

    @classmethod
    def from_numpy(cls, dtype: DataType, values: np.ndarray, mask: Optional[np.ndarray] = None) -> "Column":
        """Build a fixed-width column; ``mask`` is True where valid."""
        if dtype.kind is Kind.STRING:
            return cls.from_strings(values, mask)
        values = np.asarray(values, dtype=dtype.numpy_dtype)
        n = len(values)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.all():
                mask = None
            else:
                values = np.where(mask, values, values.dtype.type(0))
        validity = None if mask is None else pack_validity(mask)
        col = cls(dtype, n, validity=validity, values=values)
        col._mask = mask
        return col

    @classmethod
    def from_strings(cls, strings: Sequence[Optional[str]], mask: Optional[np.ndarray] = None) -> "Column":
        strings = list(strings)
        n = len(strings)
        if mask is None:
            mask = np.fromiter((s is not None for s in strings), dtype=bool, count=n)
        else:
            mask = np.asarray(mask, dtype=bool)
        encoded = [s.encode("utf-8") if (m and s is not None) else b"" for s, m in zip(strings, mask)]
        lengths = np.fromiter((len(e) for e in encoded), dtype=np.int64, count=n)
        offsets = np.zeros(n + 1, dtype="<i8")
        np.cumsum(lengths, out=offsets[1:])
        data = np.frombuffer(b"".join(encoded), dtype=np.uint8)
        if mask.all():
            mask = None
        col = cls(STRING, n, validity=None if mask is None else pack_validity(mask), offsets=offsets, data=data)
        col._mask = mask
        return col

    @classmethod
    def from_pylist(cls, dtype: DataType, items: Iterable[Any]) -> "Column":
        """Build from physical python values (None = null)."""
        items = list(items)
        if dtype.kind is Kind.STRING:
            return cls.from_strings(items)
        mask = np.fromiter((v is not None for v in items), dtype=bool, count=len(items))
        zero = False if dtype.kind is Kind.BOOL else 0
        vals = np.array([zero if v is None else v for v in items], dtype=dtype.numpy_dtype)
        return cls.from_numpy(dtype, vals, mask)

    @classmethod
    def nulls(cls, dtype: DataType, n: int) -> "Column":
        if dtype.kind is Kind.STRING:
            return cls.from_strings([None] * n)
        return cls.from_numpy(dtype, np.zeros(n, dtype=dtype.numpy_dtype), np.zeros(n, dtype=bool))

    # access

    @property
    def mask(self) -> np.ndarray:
        """Boolean validity per row (True = valid)."""
        if self._mask is None:
            if self.validity is None:
                return np.ones(self.length, dtype=bool)
            self._mask = unpack_validity(self.validity, self.length)
        return self._mask

    @property
    def has_nulls(self) -> bool:
        return self.validity is not None

    @property
    def null_count(self) -> int:
        return 0 if self.validity is None else int(self.length - self.mask.sum())

    def strings(self) -> np.ndarray:
        """Object array of python str; nulls appear as ''."""
        if self._strings is None:
            raw = self.data.tobytes()
            off = self.offsets.tolist()
            out = np.empty(self.length, dtype=object)
            out[:] = [raw[off[i]:off[i + 1]].decode("utf-8") for i in range(self.length)]
            self._strings = out
        return self._strings

    def to_pylist(self) -> list:
        vals = self.strings() if self.dtype.kind is Kind.STRING else self.values
        mask = self.mask
        out = vals.tolist()
        if self.validity is not None:
            for i in np.flatnonzero(~mask).tolist():
                out[i] = None
        return out

    @property
    def nbytes(self) -> int:
        """Logical size in bytes, as accounted by the buffer manager."""
        n = 0 if self.validity is None else (self.length + 7) // 8
        if self.dtype.kind is Kind.STRING:
            return n + 8 * (self.length + 1) + int(self.offsets[-1])
        return n + self.dtype.width * self.length

    def equals(self, other: "Column") -> bool:
        if self.dtype != other.dtype or self.length != other.length:
            return False
        if (self.validity is None) != (other.validity is None):
            return False
        if self.validity is not None and not np.array_equal(self.mask, other.mask):
            return False
        if self.dtype.kind is Kind.STRING:
            return np.array_equal(self.offsets, other.offsets) and np.array_equal(self.data, other.data)
        return self.values.tobytes() == other.values.tobytes()

    def slice(self, start: int, stop: int) -> "Column":
        stop = min(stop, self.length)
        start = min(start, stop)
        mask = None if self.validity is None else self.mask[start:stop]
        if self.dtype.kind is Kind.STRING:
            off = self.offsets[start:stop + 1]
            data = self.data[off[0]:off[-1]]
            col = Column(self.dtype, stop - start, offsets=off - off[0], data=data)
            if mask is not None and not mask.all():
                col.validity = pack_validity(mask)
                col._mask = mask
            return col
        return Column.from_numpy(self.dtype, self.values[start:stop], mask)

    def __len__(self):
        return self.length

    def __repr__(self):
        head = self.to_pylist()[:8]
        return f"Column({self.dtype}, n={self.length}, {head}{'...' if self.length > 8 else ''})"


class SelectionVector:
    """Row indices into a source batch.

    ``wide`` vectors hold uint64 indices (engine side); ``narrow`` vectors
    hold int32 indices (kernel side). The all-ones sentinel (wide) or -1
    (narrow) stands for a null-padded row, as emitted by left joins.
    """

    __slots__ = ("width", "indices")

    WIDE = "wide"
    NARROW = "narrow"

    def __init__(self, width: str, indices: np.ndarray):
        if width == self.WIDE:
            indices = np.asarray(indices, dtype=np.uint64)
        elif width == self.NARROW:
            indices = np.asarray(indices, dtype=np.int32)
        else:
            raise ValueError(f"unknown selection width {width!r}")
        self.width = width
        self.indices = indices

    @classmethod
    def wide(cls, indices) -> "SelectionVector":
        return cls(cls.WIDE, indices)

    @classmethod
    def narrow(cls, indices) -> "SelectionVector":
        return cls(cls.NARROW, indices)

    @classmethod
    def identity(cls, n: int) -> "SelectionVector":
        return cls(cls.WIDE, np.arange(n, dtype=np.uint64))

    def __len__(self):
        return len(self.indices)

    def as_int64(self) -> np.ndarray:
        """Indices as int64 with the null sentinel mapped to -1."""
        if self.width == self.NARROW:
            return self.indices.astype(np.int64)
        return self.indices.astype(np.int64)  # sentinel wraps to -1

    def widen(self) -> "SelectionVector":
        if self.width == self.WIDE:
            return self
        return SelectionVector.wide(self.as_int64().astype(np.uint64))

    def __repr__(self):
        return f"SelectionVector({self.width}, {self.indices.tolist()[:16]})"


def narrow_indices(s: SelectionVector, limit: int = NARROW_LIMIT) -> SelectionVector:
    """Convert engine-width indices to kernel-width, refusing to truncate.

    Raises IndexOverflow when any index is above ``limit``. Null-pad
    sentinels map to the narrow sentinel.
    """
    if s.width == SelectionVector.NARROW:
        idx = s.indices
        if len(idx) and int(idx.max()) > limit:
            raise IndexOverflow(f"row index {int(idx.max())} exceeds narrow limit {limit}")
        return s
    idx = s.indices
    if len(idx) == 0:
        return SelectionVector.narrow(np.empty(0, dtype=np.int32))
    sentinel = idx == WIDE_SENTINEL
    real = idx[~sentinel] if sentinel.any() else idx
    if len(real) and int(real.max()) > min(limit, NARROW_LIMIT):
        raise IndexOverflow(f"row index {int(real.max())} exceeds narrow limit {limit}")
    out = idx.astype(np.int64)
    out[sentinel] = -1
    return SelectionVector.narrow(out.astype(np.int32))


def gather(c: Column, s: SelectionVector) -> Column:
    """out[i] = c[s[i]], validity included; sentinel indices produce nulls."""
    idx = s.as_int64()
    n = len(idx)
    pad = idx < 0
    has_pad = bool(pad.any())
    if n and (int(idx.max()) >= c.length):
        raise IndexOutOfRange(f"index {int(idx.max())} out of range for column of {c.length} rows")
    safe = np.where(pad, 0, idx) if has_pad else idx
    if c.validity is not None:
        mask = c.mask[safe] if c.length else np.zeros(n, dtype=bool)
        if has_pad:
            mask = mask & ~pad
    elif has_pad:
        mask = ~pad
    else:
        mask = None
    if c.length == 0:
        # only sentinel indices can address an empty column
        return Column.nulls(c.dtype, n) if n else c.slice(0, 0)
    if c.dtype.kind is Kind.STRING:
        starts = c.offsets[safe]
        lengths = c.offsets[safe + 1] - starts
        if mask is not None:
            lengths = np.where(mask, lengths, 0)
        offsets = np.zeros(n + 1, dtype="<i8")
        np.cumsum(lengths, out=offsets[1:])
        total = int(offsets[-1])
        if total:
            pos = np.repeat(starts - offsets[:-1], lengths) + np.arange(total, dtype=np.int64)
            data = c.data[pos]
        else:
            data = np.empty(0, dtype=np.uint8)
        col = Column(c.dtype, n, offsets=offsets, data=data)
        if mask is not None and not mask.all():
            col.validity = pack_validity(mask)
            col._mask = mask
        return col
    return Column.from_numpy(c.dtype, c.values[safe], mask)
