"""Scalar expression trees.

Expressions are immutable. ``dtype`` is None until ``resolve`` has typed
the tree against an input schema.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

from ..dtypes import (
    BOOL,
    DATE32,
    FLOAT64,
    INT64,
    MAX_DECIMAL_PRECISION,
    STRING,
    DataType,
    Kind,
    family,
)
from ..errors import OrdinalOutOfRange, TypeMismatch, UnknownFunction

ARITH_OPS = ("+", "-", "*", "/")
COMPARE_OPS = ("=", "<>", "<", "<=", ">", ">=")
BOOL_OPS = ("and", "or", "not")


@dataclass(frozen=True)
class Expr:
    dtype: Optional[DataType] = field(default=None, kw_only=True, compare=False)


@dataclass(frozen=True)
class ColumnRef(Expr):
    index: int


@dataclass(frozen=True)
class Literal(Expr):
    type: DataType
    value: Any  # physical value, None for null


@dataclass(frozen=True)
class Arith(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Compare(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class BoolOp(Expr):
    op: str
    args: tuple


@dataclass(frozen=True)
class Like(Expr):
    input: Expr
    pattern: str


@dataclass(frozen=True)
class Case(Expr):
    whens: tuple  # ((cond, value), ...)
    otherwise: Optional[Expr]


@dataclass(frozen=True)
class Cast(Expr):
    input: Expr
    target: DataType


def children(e: Expr) -> tuple:
    if isinstance(e, (Arith, Compare)):
        return (e.left, e.right)
    if isinstance(e, BoolOp):
        return e.args
    if isinstance(e, (Like, Cast)):
        return (e.input,)
    if isinstance(e, Case):
        out = []
        for c, v in e.whens:
            out += [c, v]
        if e.otherwise is not None:
            out.append(e.otherwise)
        return tuple(out)
    return ()


def column_refs(e: Expr) -> set[int]:
    if isinstance(e, ColumnRef):
        return {e.index}
    out: set[int] = set()
    for c in children(e):
        out |= column_refs(c)
    return out


# typing

def decimal_view(t: DataType) -> tuple[int, int]:
    """(precision, scale) of a DECIMAL or INT64 operand."""
    if t.kind is Kind.DECIMAL:
        return t.precision, t.scale
    return MAX_DECIMAL_PRECISION, 0


def common_numeric(a: DataType, b: DataType) -> DataType:
    """Type both operands are promoted to for comparison and CASE."""
    if a == b:
        return a
    if Kind.FLOAT64 in (a.kind, b.kind):
        return FLOAT64
    if a.kind is Kind.INT64 and b.kind is Kind.INT64:
        return INT64
    pa, sa = decimal_view(a)
    pb, sb = decimal_view(b)
    s = max(sa, sb)
    p = min(MAX_DECIMAL_PRECISION, max(pa - sa, pb - sb) + s)
    return DataType(Kind.DECIMAL, max(p, s, 1), s)


def arith_type(op: str, a: DataType, b: DataType) -> DataType:
    if a.kind is Kind.DATE32 or b.kind is Kind.DATE32:
        if op == "+" and {a.kind, b.kind} == {Kind.DATE32, Kind.INT64}:
            return DATE32
        if op == "-" and a.kind is Kind.DATE32 and b.kind is Kind.INT64:
            return DATE32
        if op == "-" and a.kind is Kind.DATE32 and b.kind is Kind.DATE32:
            return INT64
        raise TypeMismatch(f"cannot apply {op} to {a} and {b}")
    if not (a.is_numeric and b.is_numeric):
        raise TypeMismatch(f"cannot apply {op} to {a} and {b}")
    if op == "/" or Kind.FLOAT64 in (a.kind, b.kind):
        return FLOAT64
    if a.kind is Kind.INT64 and b.kind is Kind.INT64:
        return INT64
    pa, sa = decimal_view(a)
    pb, sb = decimal_view(b)
    if op == "*":
        s = sa + sb
        if s > MAX_DECIMAL_PRECISION:
            raise TypeMismatch(f"product scale {s} exceeds {MAX_DECIMAL_PRECISION}")
        return DataType(Kind.DECIMAL, max(min(MAX_DECIMAL_PRECISION, pa + pb), s, 1), s)
    s = max(sa, sb)
    p = min(MAX_DECIMAL_PRECISION, max(pa - sa, pb - sb) + s + 1)
    return DataType(Kind.DECIMAL, max(p, s, 1), s)


_CASTS = {
    Kind.INT64: {Kind.INT64, Kind.FLOAT64, Kind.DECIMAL, Kind.STRING, Kind.BOOL},
    Kind.FLOAT64: {Kind.INT64, Kind.FLOAT64, Kind.DECIMAL},
    Kind.DECIMAL: {Kind.INT64, Kind.FLOAT64, Kind.DECIMAL, Kind.STRING},
    Kind.DATE32: {Kind.DATE32, Kind.INT64, Kind.STRING},
    Kind.BOOL: {Kind.BOOL, Kind.INT64},
    Kind.STRING: {Kind.STRING},
}


def resolve(e: Expr, input_types: Sequence[DataType]) -> Expr:
    """Return a copy of ``e`` with every node typed; raises on type errors."""
    if isinstance(e, ColumnRef):
        if not (0 <= e.index < len(input_types)):
            raise OrdinalOutOfRange(f"column ordinal {e.index} outside input of arity {len(input_types)}")
        return replace(e, dtype=input_types[e.index])
    if isinstance(e, Literal):
        return replace(e, dtype=e.type)
    if isinstance(e, Arith):
        l, r = resolve(e.left, input_types), resolve(e.right, input_types)
        return replace(e, left=l, right=r, dtype=arith_type(e.op, l.dtype, r.dtype))
    if isinstance(e, Compare):
        l, r = resolve(e.left, input_types), resolve(e.right, input_types)
        if family(l.dtype) != family(r.dtype):
            raise TypeMismatch(f"cannot compare {l.dtype} with {r.dtype}")
        return replace(e, left=l, right=r, dtype=BOOL)
    if isinstance(e, BoolOp):
        args = tuple(resolve(a, input_types) for a in e.args)
        for a in args:
            if a.dtype != BOOL:
                raise TypeMismatch(f"{e.op} needs BOOL operands, got {a.dtype}")
        if e.op == "not" and len(args) != 1:
            raise TypeMismatch("not takes one operand")
        if e.op in ("and", "or") and len(args) < 2:
            raise TypeMismatch(f"{e.op} takes at least two operands")
        return replace(e, args=args, dtype=BOOL)
    if isinstance(e, Like):
        inp = resolve(e.input, input_types)
        if inp.dtype != STRING:
            raise TypeMismatch(f"like needs a STRING input, got {inp.dtype}")
        return replace(e, input=inp, dtype=BOOL)
    if isinstance(e, Case):
        whens = []
        out_t = None
        for c, v in e.whens:
            c, v = resolve(c, input_types), resolve(v, input_types)
            if c.dtype != BOOL:
                raise TypeMismatch("case condition must be BOOL")
            whens.append((c, v))
        other = resolve(e.otherwise, input_types) if e.otherwise is not None else None
        for v in [v for _, v in whens] + ([other] if other is not None else []):
            out_t = v.dtype if out_t is None else _unify(out_t, v.dtype)
        return replace(e, whens=tuple(whens), otherwise=other, dtype=out_t)
    if isinstance(e, Cast):
        inp = resolve(e.input, input_types)
        if e.target.kind not in _CASTS[inp.dtype.kind]:
            raise TypeMismatch(f"cannot cast {inp.dtype} to {e.target}")
        return replace(e, input=inp, dtype=e.target)
    raise UnknownFunction(f"unknown expression node {type(e).__name__}")


def _unify(a: DataType, b: DataType) -> DataType:
    if a == b:
        return a
    if a.is_numeric and b.is_numeric:
        return common_numeric(a, b)
    raise TypeMismatch(f"case branches disagree: {a} vs {b}")
