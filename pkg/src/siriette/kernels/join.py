"""Filter and hash-join kernels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..columnar import NARROW_LIMIT, Column, SelectionVector, narrow_indices
from ..columnar.column import WIDE_SENTINEL
from ..dtypes import Kind
from ..errors import SchemaMismatch
from .hashing import hash_columns
from .hashtable import HashIndex


def filter(b, predicate: Column) -> SelectionVector:  # noqa: A001 - kernel name
    """Ascending indices of rows where ``predicate`` is true (null excluded)."""
    keep = predicate.values.astype(bool, copy=False)
    if predicate.validity is not None:
        keep = keep & predicate.mask
    return SelectionVector.wide(np.flatnonzero(keep))


def _key_values(c: Column) -> np.ndarray:
    return c.strings() if c.dtype.kind is Kind.STRING else c.values


def _all_valid(cols: Sequence[Column], n: int) -> np.ndarray:
    valid = np.ones(n, dtype=bool)
    for c in cols:
        if c.validity is not None:
            valid &= c.mask
    return valid


@dataclass
class JoinTable:
    """Frozen build side: hash index plus build rows grouped by hash.

    ``order`` lists build rows sorted by key hash (ties by row number);
    entry ``e`` of the index covers ``order[starts[e]:starts[e] + counts[e]]``.
    Rows with a null key are kept out of the index, so they never match.
    """

    keys: list
    n_rows: int
    index: HashIndex
    order: np.ndarray
    starts: np.ndarray
    counts: np.ndarray

    @property
    def nbytes(self) -> int:
        return self.index.nbytes + 8 * (len(self.order) + len(self.starts) + len(self.counts))


def join_build(keys: Sequence[Column]) -> JoinTable:
    keys = list(keys)
    n = keys[0].length if keys else 0
    for k in keys:
        if k.length != n:
            raise SchemaMismatch("build key columns differ in length")
    valid_rows = np.flatnonzero(_all_valid(keys, n))
    h = hash_columns(keys, n)[valid_rows]
    perm = np.argsort(h, kind="stable")
    order = valid_rows[perm]
    sorted_h = h[perm]
    uniq, starts, counts = np.unique(sorted_h, return_index=True, return_counts=True)
    index = HashIndex(len(uniq))
    entries = index.insert(uniq)
    # entries are claimed in slot order; reorder starts/counts to match
    starts_by_entry = np.empty(len(uniq), dtype=np.int64)
    counts_by_entry = np.empty(len(uniq), dtype=np.int64)
    starts_by_entry[entries] = starts
    counts_by_entry[entries] = counts
    return JoinTable(keys, n, index, order, starts_by_entry, counts_by_entry)


def _candidate_pairs(t: JoinTable, probe_keys: Sequence[Column]):
    n = probe_keys[0].length if probe_keys else 0
    valid = _all_valid(probe_keys, n)
    probe_rows = np.flatnonzero(valid)
    entry = t.index.lookup(hash_columns(probe_keys, n)[probe_rows])
    found = entry >= 0
    probe_rows, entry = probe_rows[found], entry[found]
    counts = t.counts[entry]
    total = int(counts.sum())
    p_idx = np.repeat(probe_rows, counts)
    offsets_in_bucket = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    b_idx = t.order[np.repeat(t.starts[entry], counts) + offsets_in_bucket]
    # hash equality is not key equality
    same = np.ones(total, dtype=bool)
    for bk, pk in zip(t.keys, probe_keys):
        same &= _key_values(bk)[b_idx] == _key_values(pk)[p_idx]
    return b_idx[same], p_idx[same], n


def join_probe(t: JoinTable, probe_keys: Sequence[Column], join_type: str = "inner", narrow_limit: int = NARROW_LIMIT):
    """Match probe rows against the build table.

    Returns narrow (build, probe) selection vectors. inner/left pairs are in
    probe-major order; left pads unmatched probe rows with the null sentinel;
    semi/anti return an empty build vector and the qualifying probe rows.
    """
    probe_keys = list(probe_keys)
    if [k.dtype for k in probe_keys] != [k.dtype for k in t.keys]:
        raise SchemaMismatch("probe key types differ from build key types")
    b_idx, p_idx, n = _candidate_pairs(t, probe_keys)
    empty = np.empty(0, dtype=np.uint64)
    if join_type == "inner":
        build, probe = b_idx.astype(np.uint64), p_idx.astype(np.uint64)
    elif join_type == "left":
        matched = np.zeros(n, dtype=bool)
        matched[p_idx] = True
        lonely = np.flatnonzero(~matched)
        all_p = np.concatenate([p_idx, lonely])
        all_b = np.concatenate([b_idx.astype(np.uint64), np.full(len(lonely), WIDE_SENTINEL, dtype=np.uint64)])
        perm = np.argsort(all_p, kind="stable")
        build, probe = all_b[perm], all_p[perm].astype(np.uint64)
    elif join_type == "semi":
        build, probe = empty, np.unique(p_idx).astype(np.uint64)
    elif join_type == "anti":
        matched = np.zeros(n, dtype=bool)
        matched[p_idx] = True
        build, probe = empty, np.flatnonzero(~matched).astype(np.uint64)
    else:
        raise ValueError(f"unknown join type {join_type!r}")
    return (
        narrow_indices(SelectionVector.wide(build), narrow_limit),
        narrow_indices(SelectionVector.wide(probe), narrow_limit),
    )
