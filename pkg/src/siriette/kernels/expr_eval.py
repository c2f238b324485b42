"""Vectorized expression evaluation with three-valued null semantics."""
from __future__ import annotations

import re
from functools import lru_cache

import numpy as np

from ..columnar import Batch, Column
from ..dtypes import DataType, Kind, days_to_date, format_decimal
from ..plan_ir.expr import Arith, BoolOp, Case, Cast, ColumnRef, Compare, Expr, Like, Literal, common_numeric


def _pow10(k: int) -> np.int64:
    return np.int64(10**k)


def _full(n, value, dtype):
    if dtype.kind is Kind.STRING:
        out = np.empty(n, dtype=object)
        out[:] = "" if value is None else value
        return out
    return np.full(n, 0 if value is None else value, dtype=dtype.numpy_dtype)


def _as_float(vals: np.ndarray, t: DataType) -> np.ndarray:
    if t.kind is Kind.DECIMAL:
        return vals.astype(np.float64) / (10.0 ** t.scale)
    return vals.astype(np.float64)


def _rescale(vals: np.ndarray, t: DataType, scale: int) -> np.ndarray:
    """INT64/DECIMAL values re-expressed at a larger scale (wrapping)."""
    have = t.scale if t.kind is Kind.DECIMAL else 0
    if scale == have:
        return vals.astype(np.int64, copy=False)
    return vals.astype(np.int64) * _pow10(scale - have)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _decimal_downscale(vals: np.ndarray, by: int) -> np.ndarray:
    d = 10**by
    q = (np.abs(vals) + d // 2) // d
    return np.where(vals < 0, -q, q).astype(np.int64)


def _trunc_div(vals: np.ndarray, d: int) -> np.ndarray:
    q = np.abs(vals) // d
    return np.where(vals < 0, -q, q).astype(np.int64)


@lru_cache(maxsize=256)
def like_regex(pattern: str) -> "re.Pattern":
    out = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "\\" and i + 1 < len(pattern):
            out.append(re.escape(pattern[i + 1]))
            i += 2
            continue
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
        i += 1
    return re.compile("".join(out), re.DOTALL)


def _cast(vals, valid, src: DataType, dst: DataType):
    sk, dk = src.kind, dst.kind
    if src == dst:
        return vals, valid
    if dk is Kind.FLOAT64:
        return _as_float(vals, src), valid
    if dk is Kind.INT64:
        if sk is Kind.FLOAT64:
            return np.trunc(vals).astype(np.int64), valid
        if sk is Kind.DECIMAL:
            return _trunc_div(vals, 10**src.scale), valid
        return vals.astype(np.int64), valid
    if dk is Kind.DECIMAL:
        if sk is Kind.FLOAT64:
            return _round_half_away(vals * (10.0 ** dst.scale)).astype(np.int64), valid
        have = src.scale if sk is Kind.DECIMAL else 0
        if dst.scale >= have:
            return _rescale(vals, src, dst.scale), valid
        return _decimal_downscale(vals, have - dst.scale), valid
    if dk is Kind.BOOL:
        return vals != 0, valid
    if dk is Kind.STRING:
        if sk is Kind.DECIMAL:
            conv = lambda v: format_decimal(v, src.scale)  # noqa: E731
        elif sk is Kind.DATE32:
            conv = days_to_date
        else:
            conv = str
        out = np.empty(len(vals), dtype=object)
        out[:] = [conv(v) if ok else "" for v, ok in zip(vals.tolist(), valid.tolist())]
        return out, valid
    raise TypeError(f"cast {src} -> {dst}")  # pragma: no cover


def _compare(op, a, b):
    if op == "=":
        return a == b
    if op == "<>":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


class _Evaluator:
    def __init__(self, batch: Batch):
        self.batch = batch
        self.n = batch.row_count

    def eval(self, e: Expr):
        """Return (values, valid) arrays for ``e``."""
        n = self.n
        if isinstance(e, ColumnRef):
            c = self.batch.columns[e.index]
            vals = c.strings() if c.dtype.kind is Kind.STRING else c.values
            return vals, c.mask
        if isinstance(e, Literal):
            valid = np.full(n, e.value is not None)
            return _full(n, e.value, e.type), valid
        if isinstance(e, Arith):
            return self.arith(e)
        if isinstance(e, Compare):
            return self.compare(e)
        if isinstance(e, BoolOp):
            parts = [self.eval(a) for a in e.args]
            if e.op == "not":
                v, ok = parts[0]
                return ~v.astype(bool), ok
            null_any = np.zeros(n, dtype=bool)
            for v, ok in parts:
                null_any |= ~ok
            if e.op == "and":
                known_false = np.zeros(n, dtype=bool)
                for v, ok in parts:
                    known_false |= ok & ~v
                return ~known_false & ~null_any, known_false | ~null_any
            known_true = np.zeros(n, dtype=bool)
            for v, ok in parts:
                known_true |= ok & v
            return known_true, known_true | ~null_any
        if isinstance(e, Like):
            vals, ok = self.eval(e.input)
            rx = like_regex(e.pattern)
            if n == 0:
                return np.zeros(0, dtype=bool), ok
            uniq, inv = np.unique(vals, return_inverse=True)
            hits = np.fromiter((rx.fullmatch(u) is not None for u in uniq), dtype=bool, count=len(uniq))
            return hits[inv.reshape(-1)] & ok, ok
        if isinstance(e, Case):
            out_t = e.dtype
            vals = _full(n, None, out_t)
            valid = np.zeros(n, dtype=bool)
            decided = np.zeros(n, dtype=bool)
            branches = list(e.whens) + ([(None, e.otherwise)] if e.otherwise is not None else [])
            for cond, value in branches:
                if cond is None:
                    take = ~decided
                else:
                    cv, cok = self.eval(cond)
                    take = ~decided & cok & cv
                if take.any():
                    v, ok = self.eval(value)
                    v, ok = _cast(v, ok, value.dtype, out_t)
                    vals = np.where(take, v, vals)
                    valid = np.where(take, ok, valid)
                decided |= take
            return vals, valid
        if isinstance(e, Cast):
            v, ok = self.eval(e.input)
            return _cast(v, ok, e.input.dtype, e.target)
        raise TypeError(f"cannot evaluate {type(e).__name__}")  # pragma: no cover

    def arith(self, e: Arith):
        (a, aok), (b, bok) = self.eval(e.left), self.eval(e.right)
        lt, rt, t = e.left.dtype, e.right.dtype, e.dtype
        valid = aok & bok
        op = e.op
        if Kind.DATE32 in (lt.kind, rt.kind):
            a64, b64 = a.astype(np.int64), b.astype(np.int64)
            res = a64 + b64 if op == "+" else a64 - b64
            return (res.astype(np.int32) if t.kind is Kind.DATE32 else res), valid
        if t.kind is Kind.FLOAT64:
            af, bf = _as_float(a, lt), _as_float(b, rt)
            if op == "/":
                zero = bf == 0.0
                with np.errstate(divide="ignore", invalid="ignore"):
                    res = af / np.where(zero, 1.0, bf)
                return res, valid & ~zero
            res = af + bf if op == "+" else af - bf if op == "-" else af * bf
            return res, valid
        # exact integer / decimal arithmetic, wrapping at 64 bits
        with np.errstate(over="ignore"):
            if op == "*":
                res = a.astype(np.int64) * b.astype(np.int64)
            else:
                s = t.scale if t.kind is Kind.DECIMAL else 0
                a2, b2 = _rescale(a, lt, s), _rescale(b, rt, s)
                res = a2 + b2 if op == "+" else a2 - b2
        return res, valid

    def compare(self, e: Compare):
        (a, aok), (b, bok) = self.eval(e.left), self.eval(e.right)
        lt, rt = e.left.dtype, e.right.dtype
        if lt.is_numeric and lt != rt:
            t = common_numeric(lt, rt)
            if t.kind is Kind.FLOAT64:
                a, b = _as_float(a, lt), _as_float(b, rt)
            else:
                s = t.scale if t.kind is Kind.DECIMAL else 0
                a, b = _rescale(a, lt, s), _rescale(b, rt, s)
        elif lt.kind is Kind.BOOL:
            a, b = a.astype(np.int8), b.astype(np.int8)
        res = _compare(e.op, a, b)
        valid = aok & bok
        return np.asarray(res, dtype=bool) & valid, valid


def eval_expr(e: Expr, b: Batch) -> Column:
    """Evaluate a typed expression over every row of ``b``."""
    vals, valid = _Evaluator(b).eval(e)
    if e.dtype.kind is Kind.STRING:
        return Column.from_strings(list(vals), valid)
    if np.ndim(vals) == 0:  # pragma: no cover
        vals = np.full(b.row_count, vals)
    return Column.from_numpy(e.dtype, vals, valid)
