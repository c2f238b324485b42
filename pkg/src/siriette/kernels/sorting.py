"""Sort kernel and order-preserving key codes."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..columnar import Batch, Column, SelectionVector
from ..dtypes import Kind


def order_codes(c: Column, descending: bool = False) -> np.ndarray:
    """Numeric array whose ascending order matches the column's value order.

    Null slots get arbitrary codes; callers add a separate null flag.
    """
    k = c.dtype.kind
    if k is Kind.STRING or descending:
        vals = c.strings() if k is Kind.STRING else c.values
        if c.length == 0:
            return np.zeros(0, dtype=np.int64)
        _, inv = np.unique(vals, return_inverse=True)
        inv = inv.reshape(-1).astype(np.int64)
        return -inv if descending else inv
    if k is Kind.BOOL:
        return c.values.astype(np.int8)
    if k is Kind.FLOAT64:
        return c.values + 0.0
    return c.values


def lexsort_keys(columns: Sequence[Column], descending: Sequence[bool], nulls_first: Sequence[bool]) -> list:
    """np.lexsort key list (least significant first) for the given sort keys."""
    keys = []
    for c, desc, nf in reversed(list(zip(columns, descending, nulls_first))):
        keys.append(order_codes(c, desc))
        if c.validity is not None:
            keys.append(c.mask if nf else ~c.mask)
    return keys


def sort(b: Batch, keys) -> SelectionVector:
    """Stable permutation ordering ``b`` by ``keys`` (SortKey sequence)."""
    if b.row_count == 0:
        return SelectionVector.wide(np.empty(0, dtype=np.uint64))
    cols = [b.columns[k.ordinal] for k in keys]
    lk = lexsort_keys(cols, [k.descending for k in keys], [k.nulls_first for k in keys])
    return SelectionVector.wide(np.lexsort(lk))
