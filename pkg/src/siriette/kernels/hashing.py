"""64-bit FNV-1a key hashing.

Each value is hashed over its canonical little-endian bytes (UTF-8 for
strings); nulls hash to 0. Multi-column keys combine as
``h = h * 31 + column_hash`` starting from 0, all modulo 2**64.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..columnar import Column
from ..dtypes import Kind

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)
_MUL = np.uint64(31)
_MAX_STRING_MATRIX = 1 << 26


def _canonical_bytes(c: Column) -> np.ndarray:
    k = c.dtype.kind
    if k is Kind.FLOAT64:
        vals = (c.values + 0.0).astype("<f8")  # folds -0.0 into 0.0
    elif k is Kind.BOOL:
        vals = c.values.astype(np.uint8)
    else:
        vals = c.values.astype(c.dtype.numpy_dtype.newbyteorder("<"), copy=False)
    vals = np.ascontiguousarray(vals)
    return vals.view(np.uint8).reshape(c.length, vals.dtype.itemsize)


def _fnv_fixed(c: Column) -> np.ndarray:
    raw = _canonical_bytes(c)
    h = np.full(c.length, FNV_OFFSET, dtype=np.uint64)
    for j in range(raw.shape[1]):
        h ^= raw[:, j]
        h *= FNV_PRIME
    return h


def fnv1a_bytes(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _fnv_strings(c: Column) -> np.ndarray:
    n = c.length
    lengths = np.diff(c.offsets)
    longest = int(lengths.max()) if n else 0
    h = np.full(n, FNV_OFFSET, dtype=np.uint64)
    if longest == 0:
        return h
    if n * longest > _MAX_STRING_MATRIX:
        raw = c.data.tobytes()
        off = c.offsets.tolist()
        return np.array([fnv1a_bytes(raw[off[i]:off[i + 1]]) for i in range(n)], dtype=np.uint64)
    matrix = np.zeros((n, longest), dtype=np.uint8)
    rows = np.repeat(np.arange(n), lengths)
    cols = np.arange(len(rows)) - np.repeat(c.offsets[:-1], lengths)
    matrix[rows, cols] = c.data[: int(c.offsets[-1])]
    for j in range(longest):
        live = lengths > j
        h[live] = (h[live] ^ matrix[live, j]) * FNV_PRIME
    return h


def hash_column(c: Column) -> np.ndarray:
    h = _fnv_strings(c) if c.dtype.kind is Kind.STRING else _fnv_fixed(c)
    if c.validity is not None:
        h[~c.mask] = 0
    return h


def hash_columns(cols: Sequence[Column], n: int = 0) -> np.ndarray:
    """Combined key hash per row (uint64)."""
    if not cols:
        return np.zeros(n, dtype=np.uint64)
    h = np.zeros(cols[0].length, dtype=np.uint64)
    for c in cols:
        h = h * _MUL + hash_column(c)
    return h
