"""Little-endian batch encoding used as the exchange frame payload.

Layout, no padding::

    u32 column_count
    per column:
        u8  dtype tag            (Kind value)
        u8  precision, u8 scale  (DECIMAL only)
        u64 row_count
        u8  validity_present
        ceil(rows / 8) validity bytes, LSB-first   (if present)
        payload: rows * width value bytes, or for STRING
                 (rows + 1) u64 offsets followed by offsets[-1] bytes
"""
from __future__ import annotations

import struct

import numpy as np

from ..dtypes import DataType, Kind
from ..errors import TransportError
from .batch import Batch
from .column import Column

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_COL_HEAD = struct.Struct("<BQB")


def encode_column(c: Column) -> bytes:
    parts = [bytes([int(c.dtype.kind)])]
    if c.dtype.kind is Kind.DECIMAL:
        parts.append(bytes([c.dtype.precision, c.dtype.scale]))
    parts.append(_U64.pack(c.length))
    if c.validity is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01")
        parts.append(c.validity[: (c.length + 7) // 8].tobytes())
    if c.dtype.kind is Kind.STRING:
        parts.append(c.offsets.astype("<u8").tobytes())
        parts.append(c.data.tobytes())
    elif c.dtype.kind is Kind.BOOL:
        parts.append(c.values.astype(np.uint8).tobytes())
    else:
        parts.append(c.values.astype(c.dtype.numpy_dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def serialize_batch(b: Batch) -> bytes:
    return _U32.pack(len(b.columns)) + b"".join(encode_column(c) for c in b.columns)


def _take(buf: memoryview, pos: int, n: int) -> tuple[memoryview, int]:
    if pos + n > len(buf):
        raise TransportError("truncated batch payload")
    return buf[pos:pos + n], pos + n


def decode_column(buf: memoryview, pos: int) -> tuple[Column, int]:
    raw, pos = _take(buf, pos, 1)
    try:
        kind = Kind(raw[0])
    except ValueError:
        raise TransportError(f"unknown dtype tag {raw[0]}") from None
    if kind is Kind.DECIMAL:
        ps, pos = _take(buf, pos, 2)
        dtype = DataType(kind, ps[0], ps[1])
    else:
        dtype = DataType(kind)
    raw, pos = _take(buf, pos, 9)
    n = _U64.unpack(raw[:8])[0]
    has_validity = raw[8]
    validity = None
    if has_validity:
        vb, pos = _take(buf, pos, (n + 7) // 8)
        validity = np.frombuffer(vb, dtype=np.uint8).copy()
    if kind is Kind.STRING:
        ob, pos = _take(buf, pos, 8 * (n + 1))
        offsets = np.frombuffer(ob, dtype="<u8").astype("<i8")
        db, pos = _take(buf, pos, int(offsets[-1]))
        col = Column(dtype, n, validity=validity, offsets=offsets, data=np.frombuffer(db, dtype=np.uint8).copy())
    elif kind is Kind.BOOL:
        vb, pos = _take(buf, pos, n)
        col = Column(dtype, n, validity=validity, values=np.frombuffer(vb, dtype=np.uint8).astype(bool))
    else:
        vb, pos = _take(buf, pos, dtype.width * n)
        col = Column(dtype, n, validity=validity, values=np.frombuffer(vb, dtype=dtype.numpy_dtype).copy())
    return col, pos


def deserialize_batch(data: bytes) -> Batch:
    buf = memoryview(data)
    raw, pos = _take(buf, 0, 4)
    ncols = _U32.unpack(raw)[0]
    cols = []
    for _ in range(ncols):
        c, pos = decode_column(buf, pos)
        cols.append(c)
    if pos != len(buf):
        raise TransportError(f"{len(buf) - pos} trailing bytes after batch payload")
    return Batch(cols)
