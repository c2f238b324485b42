"""Grouped and scalar aggregation.

Every phase works on group ids. ``single`` and ``partial`` aggregate raw
rows; ``combine`` and ``final`` merge partial states (sum and count add,
min and max fold, avg carries a sum and a count). Integer and decimal sums
are accumulated exactly (wider than 64 bits) and fail loudly if the result
does not fit the output column.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..columnar import Batch, Column, SelectionVector, gather
from ..dtypes import FLOAT64, INT64, DataType, Kind
from ..errors import AggregateOverflow
from ..plan_ir.validate import state_types
from .expr_eval import eval_expr
from .hashing import hash_columns
from .hashtable import HashIndex
from .sorting import lexsort_keys, order_codes

_I64_MIN, _I64_MAX = -(2**63), 2**63 - 1
_LOW32 = np.int64(0xFFFFFFFF)


def _key_values(c: Column) -> np.ndarray:
    return c.strings() if c.dtype.kind is Kind.STRING else c.values


def _keys_equal(cols: Sequence[Column], rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    same = np.ones(len(rows_a), dtype=bool)
    for c in cols:
        va = _key_values(c)
        if c.validity is not None:
            m = c.mask
            both_null = ~m[rows_a] & ~m[rows_b]
            same &= both_null | ((m[rows_a] & m[rows_b]) & (va[rows_a] == va[rows_b]))
        else:
            same &= va[rows_a] == va[rows_b]
    return same


def group_ids_hash(keys: Sequence[Column], n: int):
    """(group id per row, representative row per group) via a hash table."""
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    h = hash_columns(keys, n)
    index = HashIndex(n)
    gid = index.insert(h)
    reps = np.zeros(index.size, dtype=np.int64)
    # first row to reach each entry becomes its representative
    reps[gid[::-1]] = np.arange(n - 1, -1, -1)
    ok = _keys_equal(keys, np.arange(n), reps[gid])
    if not ok.all():
        # distinct keys sharing a 64-bit hash: split them exactly
        extra: dict = {}
        next_id = len(reps)
        new_reps = list(reps)
        cols = [c.to_pylist() for c in keys]
        for r in np.flatnonzero(~ok).tolist():
            key = (int(gid[r]),) + tuple(col[r] for col in cols)
            if key not in extra:
                extra[key] = next_id
                new_reps.append(r)
                next_id += 1
            gid[r] = extra[key]
        reps = np.array(new_reps, dtype=np.int64)
    return gid, reps


def group_ids_sort(keys: Sequence[Column], n: int):
    """(group id per row, representative row per group), groups in key order.

    Keys ascend with nulls last.
    """
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    order = np.lexsort(lexsort_keys(keys, [False] * len(keys), [False] * len(keys)))
    change = np.zeros(n, dtype=bool)
    change[0] = True
    if n > 1:
        change[1:] = ~_keys_equal(keys, order[1:], order[:-1])
    gid_sorted = np.cumsum(change) - 1
    gid = np.empty(n, dtype=np.int64)
    gid[order] = gid_sorted
    reps = order[change]
    return gid, reps


def _exact_sums(vals: np.ndarray, valid: np.ndarray, gid: np.ndarray, g: int) -> list:
    """Per-group exact integer sums as python ints (None for empty groups)."""
    v = np.where(valid, vals.astype(np.int64), 0)
    lo = v & _LOW32
    hi = v >> 32
    perm = np.argsort(gid, kind="stable")
    bounds = np.searchsorted(gid[perm], np.arange(g + 1))
    cs_lo = np.concatenate([[0], np.cumsum(lo[perm])])
    cs_hi = np.concatenate([[0], np.cumsum(hi[perm])])
    lo_s = (cs_lo[bounds[1:]] - cs_lo[bounds[:-1]]).tolist()
    hi_s = (cs_hi[bounds[1:]] - cs_hi[bounds[:-1]]).tolist()
    return [h * (1 << 32) + l for h, l in zip(hi_s, lo_s)]


def _float_sums(vals: np.ndarray, valid: np.ndarray, gid: np.ndarray, g: int) -> np.ndarray:
    """Per-group sums, adding rows of a group in their input order."""
    perm = np.argsort(gid, kind="stable")
    sg = gid[perm]
    sv = np.where(valid, vals, 0.0)[perm]
    out = np.zeros(g, dtype=np.float64)
    if len(sv):
        starts = np.flatnonzero(np.concatenate([[True], sg[1:] != sg[:-1]]))
        out[sg[starts]] = np.add.reduceat(sv, starts)
    return out


def _fit_int64(sums: list, what: str) -> np.ndarray:
    for s in sums:
        if s < _I64_MIN or s > _I64_MAX:
            raise AggregateOverflow(f"{what} overflows 64 bits")
    return np.array(sums, dtype=np.int64)


def _counts(valid: np.ndarray, gid: np.ndarray, g: int) -> np.ndarray:
    return np.bincount(gid[valid], minlength=g).astype(np.int64)


def _sum_column(t: DataType, col: Column, gid, g) -> tuple[np.ndarray, np.ndarray]:
    valid = col.mask
    cnt = _counts(valid, gid, g)
    if t.kind is Kind.FLOAT64:
        return _float_sums(col.values, valid, gid, g), cnt
    return _fit_int64(_exact_sums(col.values, valid, gid, g), "sum"), cnt


def _minmax(col: Column, gid, g, want_max: bool) -> Column:
    valid = col.mask
    rows = np.flatnonzero(valid)
    present = np.zeros(g, dtype=bool)
    pick = np.zeros(g, dtype=np.int64)
    if len(rows):
        codes = order_codes(col)[rows]
        gr = gid[rows]
        perm = np.lexsort((codes, gr))
        sorted_g = gr[perm]
        if want_max:
            edge = np.concatenate([sorted_g[1:] != sorted_g[:-1], [True]])
        else:
            edge = np.concatenate([[True], sorted_g[1:] != sorted_g[:-1]])
        chosen = perm[edge]
        pick[gr[chosen]] = rows[chosen]
        present[gr[chosen]] = True
    idx = np.where(present, pick, -1)
    return gather(col, SelectionVector.narrow(idx) if len(idx) and idx.max() < 2**31 else SelectionVector.wide(idx.astype(np.uint64)))


def _avg(sum_vals, counts, sum_t: DataType) -> tuple[np.ndarray, np.ndarray]:
    ok = counts > 0
    denom = counts.astype(object) if sum_t.kind is not Kind.FLOAT64 else counts
    if sum_t.kind is Kind.FLOAT64:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(ok, sum_vals / np.where(ok, counts, 1), 0.0)
        return out, ok
    scale = sum_t.scale if sum_t.kind is Kind.DECIMAL else 0
    out = np.array(
        [float(s) / float(c * 10**scale) if c else 0.0 for s, c in zip(sum_vals, denom.tolist())],
        dtype=np.float64,
    )
    return out, ok


def _aggregate(b: Batch, key_cols, gid, g, measures, phase: str) -> list[Column]:
    merging = phase in ("combine", "final")
    out: list[Column] = []
    for m in measures:
        if m.arg is None:  # count(*)
            out.append(Column.from_numpy(INT64, np.bincount(gid, minlength=g).astype(np.int64)))
            continue
        arg = eval_expr(m.arg, b)
        t = arg.dtype
        fn = m.fn
        if merging:
            if fn == "count":
                s, _ = _sum_column(INT64, arg, gid, g)
                out.append(Column.from_numpy(INT64, s))
            elif fn == "sum":
                s, cnt = _sum_column(t, arg, gid, g)
                out.append(Column.from_numpy(t, s, cnt > 0))
            elif fn in ("min", "max"):
                out.append(_minmax(arg, gid, g, fn == "max"))
            elif fn == "avg":
                s, cnt = _sum_column(t, arg, gid, g)
                counts_col = b.columns[m.arg.index + 1]
                c, _ = _sum_column(INT64, counts_col, gid, g)
                if phase == "final":
                    vals, ok = _avg(s.tolist() if t.kind is not Kind.FLOAT64 else s, c, t)
                    out.append(Column.from_numpy(FLOAT64, vals, ok))
                else:
                    out.append(Column.from_numpy(t, s, cnt > 0))
                    out.append(Column.from_numpy(INT64, c))
            continue
        if fn == "count":
            out.append(Column.from_numpy(INT64, _counts(arg.mask, gid, g)))
        elif fn in ("min", "max"):
            out.append(_minmax(arg, gid, g, fn == "max"))
        elif fn == "sum":
            st = state_types("sum", t)[0]
            s, cnt = _sum_column(st if st.kind is Kind.FLOAT64 else t, arg, gid, g)
            out.append(Column.from_numpy(st, s, cnt > 0))
        elif fn == "avg":
            st = state_types("avg", t)[0]
            valid = arg.mask
            cnt = _counts(valid, gid, g)
            if t.kind is Kind.FLOAT64:
                s = _float_sums(arg.values, valid, gid, g)
                exact = s
            else:
                exact = _exact_sums(arg.values, valid, gid, g)
                s = None
            if phase == "partial":
                out.append(Column.from_numpy(st, s if s is not None else _fit_int64(exact, "avg sum"), cnt > 0))
                out.append(Column.from_numpy(INT64, cnt))
            else:
                vals, ok = _avg(exact, cnt, st)
                out.append(Column.from_numpy(FLOAT64, vals, ok))
        else:
            raise ValueError(f"unknown aggregate {fn}")
    return out


def _group_by(b: Batch, key_ordinals, measures, phase, grouping) -> Batch:
    n = b.row_count
    key_cols = [b.columns[k] for k in key_ordinals]
    gid, reps = grouping(key_cols, n)
    g = len(reps)
    keys_out = [gather(c, SelectionVector.wide(reps.astype(np.uint64))) for c in key_cols]
    return Batch(keys_out + _aggregate(b, key_cols, gid, g, measures, phase), g)


def group_by_hash(b: Batch, key_ordinals, measures, phase: str = "single") -> Batch:
    """Hash-table group-by; output group order is unspecified."""
    return _group_by(b, key_ordinals, measures, phase, group_ids_hash)


def group_by_sort(b: Batch, key_ordinals, measures, phase: str = "single") -> Batch:
    """Sort-based group-by; groups come out in ascending key order, nulls last."""
    return _group_by(b, key_ordinals, measures, phase, group_ids_sort)


def reduce(b: Batch, measures, phase: str = "single") -> Batch:  # noqa: A001 - kernel name
    """Keyless aggregation: always exactly one output row."""
    gid = np.zeros(b.row_count, dtype=np.int64)
    return Batch(_aggregate(b, [], gid, 1, measures, phase), 1)
