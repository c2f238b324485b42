"""Scalar, row-at-a-time semantics shared by the reference executor and the
reference kernel set. Nothing here touches the vectorized kernels.

Values are physical python values: INT64/DATE32 as int, FLOAT64 as float,
DECIMAL as its scaled int, BOOL as bool, STRING as str, null as None.
"""
from __future__ import annotations

import functools
import math
from typing import Any, Optional, Sequence

from ..dtypes import DataType, Kind, days_to_date, format_decimal
from ..errors import AggregateOverflow
from ..plan_ir.expr import Arith, BoolOp, Case, Cast, ColumnRef, Compare, Expr, Like, Literal, common_numeric

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def wrap64(v: int) -> int:
    v &= _MASK64
    return v - (1 << 64) if v >> 63 else v


def wrap32(v: int) -> int:
    v &= _MASK32
    return v - (1 << 32) if v >> 31 else v


def _scale(t: DataType) -> int:
    return t.scale if t.kind is Kind.DECIMAL else 0


def to_float(v, t: DataType) -> float:
    if t.kind is Kind.DECIMAL:
        return v / (10.0 ** t.scale)
    return float(v)


def rescale(v: int, t: DataType, scale: int) -> int:
    have = _scale(t)
    return v if scale == have else wrap64(v * 10 ** (scale - have))


def _half_away(x: float) -> int:
    q = math.floor(abs(x) + 0.5)
    return int(-q if x < 0 else q)


def cast_value(v, src: DataType, dst: DataType):
    if v is None or src == dst:
        return v
    sk, dk = src.kind, dst.kind
    if dk is Kind.FLOAT64:
        return to_float(v, src)
    if dk is Kind.INT64:
        if sk is Kind.FLOAT64:
            return wrap64(int(math.trunc(v)))
        if sk is Kind.DECIMAL:
            q = abs(v) // 10**src.scale
            return -q if v < 0 else q
        return int(v)
    if dk is Kind.DECIMAL:
        if sk is Kind.FLOAT64:
            return wrap64(_half_away(v * (10.0 ** dst.scale)))
        have = _scale(src)
        if dst.scale >= have:
            return rescale(v, src, dst.scale)
        d = 10 ** (have - dst.scale)
        q = (abs(v) + d // 2) // d
        return -q if v < 0 else q
    if dk is Kind.BOOL:
        return v != 0
    if dk is Kind.STRING:
        if sk is Kind.DECIMAL:
            return format_decimal(v, src.scale)
        if sk is Kind.DATE32:
            return days_to_date(v)
        return str(v)
    raise TypeError(f"cast {src} -> {dst}")


@functools.lru_cache(maxsize=4096)
def like_match(value: str, pattern: str) -> bool:
    """SQL LIKE: % any run, _ any one character, backslash escapes the next."""
    tokens = []  # ("lit", ch) | ("one", None) | ("any", None)
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "\\" and i + 1 < len(pattern):
            tokens.append(("lit", pattern[i + 1]))
            i += 2
            continue
        tokens.append(("any", None) if ch == "%" else ("one", None) if ch == "_" else ("lit", ch))
        i += 1
    # dynamic programming over (token prefix, value prefix)
    n = len(value)
    row = [False] * (n + 1)
    row[0] = True
    for kind, ch in tokens:
        nxt = [False] * (n + 1)
        if kind == "any":
            seen = False
            for j in range(n + 1):
                seen = seen or row[j]
                nxt[j] = seen
        else:
            for j in range(1, n + 1):
                nxt[j] = row[j - 1] and (kind == "one" or value[j - 1] == ch)
        row = nxt
    return row[n]


def _cmp(op: str, a, b) -> bool:
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


def evaluate(e: Expr, row: Sequence[Any]):
    """Value of ``e`` on one row."""
    if isinstance(e, ColumnRef):
        return row[e.index]
    if isinstance(e, Literal):
        return e.value
    if isinstance(e, Arith):
        a, b = evaluate(e.left, row), evaluate(e.right, row)
        if a is None or b is None:
            return None
        lt, rt, t, op = e.left.dtype, e.right.dtype, e.dtype, e.op
        if Kind.DATE32 in (lt.kind, rt.kind):
            r = a + b if op == "+" else a - b
            return wrap32(r) if t.kind is Kind.DATE32 else wrap64(r)
        if t.kind is Kind.FLOAT64:
            x, y = to_float(a, lt), to_float(b, rt)
            if op == "/":
                return None if y == 0.0 else x / y
            return x + y if op == "+" else x - y if op == "-" else x * y
        if op == "*":
            return wrap64(a * b)
        s = _scale(t)
        x, y = rescale(a, lt, s), rescale(b, rt, s)
        return wrap64(x + y if op == "+" else x - y)
    if isinstance(e, Compare):
        a, b = evaluate(e.left, row), evaluate(e.right, row)
        if a is None or b is None:
            return None
        lt, rt = e.left.dtype, e.right.dtype
        if lt.is_numeric and lt != rt:
            t = common_numeric(lt, rt)
            if t.kind is Kind.FLOAT64:
                a, b = to_float(a, lt), to_float(b, rt)
            else:
                a, b = rescale(a, lt, _scale(t)), rescale(b, rt, _scale(t))
        return _cmp(e.op, a, b)
    if isinstance(e, BoolOp):
        if e.op == "not":
            v = evaluate(e.args[0], row)
            return None if v is None else not v
        vals = [evaluate(a, row) for a in e.args]
        if e.op == "and":
            if any(v is False for v in vals):
                return False
            return None if any(v is None for v in vals) else True
        if any(v is True for v in vals):
            return True
        return None if any(v is None for v in vals) else False
    if isinstance(e, Like):
        v = evaluate(e.input, row)
        return None if v is None else like_match(v, e.pattern)
    if isinstance(e, Case):
        for cond, value in e.whens:
            if evaluate(cond, row) is True:
                return cast_value(evaluate(value, row), value.dtype, e.dtype)
        if e.otherwise is None:
            return None
        return cast_value(evaluate(e.otherwise, row), e.otherwise.dtype, e.dtype)
    if isinstance(e, Cast):
        return cast_value(evaluate(e.input, row), e.input.dtype, e.target)
    raise TypeError(f"cannot evaluate {type(e).__name__}")


# ---- ordering --------------------------------------------------------------


def _order_value(v):
    return v + 0.0 if isinstance(v, float) else v


def compare_rows(a: Sequence, b: Sequence, keys) -> int:
    """Three-way comparison under SortKey-like (ordinal, descending, nulls_first)."""
    for k in keys:
        x, y = a[k.ordinal], b[k.ordinal]
        if x is None or y is None:
            if x is None and y is None:
                continue
            x_first = (x is None) == k.nulls_first
            return -1 if x_first else 1
        x, y = _order_value(x), _order_value(y)
        if x == y:
            continue
        c = -1 if x < y else 1
        return -c if k.descending else c
    return 0


def sort_rows(rows: list, keys) -> list:
    """Stable comparison sort."""
    return sorted(rows, key=functools.cmp_to_key(lambda a, b: compare_rows(a, b, keys)))


def group_order_key(key: tuple) -> tuple:
    """Sort key placing groups ascending with nulls last."""
    return tuple((1, 0) if v is None else (0, _order_value(v)) for v in key)


# ---- aggregation -----------------------------------------------------------


def _fit(v: int, what: str) -> int:
    if not (-(2**63) <= v < 2**63):
        raise AggregateOverflow(f"{what} overflows 64 bits")
    return v


class Accumulator:
    """Running state of one measure over one group."""

    __slots__ = ("fn", "t", "float_sum", "total", "count", "rows", "best")

    def __init__(self, fn: str, t: Optional[DataType]):
        self.fn = fn
        self.t = t
        self.float_sum = t is not None and t.kind is Kind.FLOAT64
        self.total = 0.0 if self.float_sum else 0
        self.count = 0
        self.rows = 0
        self.best = None

    def add(self, v) -> None:
        self.rows += 1
        if v is None:
            return
        self.count += 1
        if self.fn in ("min", "max"):
            if self.best is None:
                self.best = v
            else:
                better = _order_value(v) > _order_value(self.best) if self.fn == "max" else _order_value(v) < _order_value(self.best)
                if better:
                    self.best = v
        elif self.fn != "count":
            self.total += v

    def merge(self, state: Sequence) -> None:
        """Fold in one partial-state tuple (the layout of state_types)."""
        fn = self.fn
        if fn == "count":
            self.count += state[0]
        elif fn == "sum":
            if state[0] is not None:
                self.total += state[0]
                self.count += 1
        elif fn == "avg":
            if state[0] is not None:
                self.total += state[0]
            self.count += state[1]
        else:
            self.add(state[0])

    def state(self) -> list:
        fn = self.fn
        if fn == "count":
            return [self.count]
        if fn == "sum":
            return [self._sum()]
        if fn == "avg":
            return [self._sum(), self.count]
        return [self.best]

    def _sum(self):
        if self.count == 0:
            return None
        return self.total if self.float_sum else _fit(self.total, self.fn)

    def result(self, count_star: bool = False):
        fn = self.fn
        if fn == "count":
            return self.rows if count_star else self.count
        if fn == "sum":
            return self._sum()
        if fn == "avg":
            if self.count == 0:
                return None
            if self.float_sum:
                return self.total / self.count
            return float(self.total) / float(self.count * 10 ** _scale(self.t))
        return self.best
