"""Logical data types and schemas."""
from __future__ import annotations

import datetime as _dt
import enum
import re
from dataclasses import dataclass
from typing import Any, Iterable, Optional

import numpy as np

from .errors import PlanSyntaxError, TypeMismatch


class Kind(enum.IntEnum):
    # values double as wire tags
    INT64 = 1
    FLOAT64 = 2
    DECIMAL = 3
    DATE32 = 4
    BOOL = 5
    STRING = 6


_WIDTH = {Kind.INT64: 8, Kind.FLOAT64: 8, Kind.DECIMAL: 8, Kind.DATE32: 4, Kind.BOOL: 1}
_NUMPY = {
    Kind.INT64: np.dtype("<i8"),
    Kind.FLOAT64: np.dtype("<f8"),
    Kind.DECIMAL: np.dtype("<i8"),
    Kind.DATE32: np.dtype("<i4"),
    Kind.BOOL: np.dtype("bool"),
}

MAX_DECIMAL_PRECISION = 18
EPOCH = _dt.date(1970, 1, 1)


@dataclass(frozen=True)
class DataType:
    kind: Kind
    precision: int = 0
    scale: int = 0

    def __post_init__(self):
        if self.kind is Kind.DECIMAL:
            if not (0 <= self.scale <= self.precision <= MAX_DECIMAL_PRECISION and self.precision > 0):
                raise TypeMismatch(f"invalid DECIMAL({self.precision},{self.scale})")
        elif self.precision or self.scale:
            raise TypeMismatch(f"{self.kind.name} takes no precision/scale")

    @property
    def width(self) -> Optional[int]:
        """Bytes per value for fixed-width types, None for STRING."""
        return _WIDTH.get(self.kind)

    @property
    def numpy_dtype(self) -> np.dtype:
        if self.kind is Kind.STRING:
            return np.dtype(object)
        return _NUMPY[self.kind]

    @property
    def is_numeric(self) -> bool:
        return self.kind in (Kind.INT64, Kind.FLOAT64, Kind.DECIMAL)

    def __str__(self) -> str:
        if self.kind is Kind.DECIMAL:
            return f"DECIMAL({self.precision},{self.scale})"
        return self.kind.name

    __repr__ = __str__


INT64 = DataType(Kind.INT64)
FLOAT64 = DataType(Kind.FLOAT64)
DATE32 = DataType(Kind.DATE32)
BOOL = DataType(Kind.BOOL)
STRING = DataType(Kind.STRING)


def DECIMAL(precision: int, scale: int) -> DataType:
    return DataType(Kind.DECIMAL, precision, scale)


_DECIMAL_RE = re.compile(r"^DECIMAL\(\s*(\d+)\s*,\s*(\d+)\s*\)$")


def parse_type(text: str) -> DataType:
    t = text.strip().upper()
    m = _DECIMAL_RE.match(t)
    if m:
        return DECIMAL(int(m.group(1)), int(m.group(2)))
    try:
        kind = Kind[t]
    except KeyError:
        raise PlanSyntaxError(f"unknown data type {text!r}") from None
    if kind is Kind.DECIMAL:
        raise PlanSyntaxError("DECIMAL needs (precision, scale)")
    return DataType(kind)


def family(t: DataType) -> str:
    """Comparison family; values compare only within one family."""
    if t.is_numeric:
        return "numeric"
    return t.kind.name


@dataclass(frozen=True)
class Field:
    name: str
    dtype: DataType
    nullable: bool = True


class Schema(tuple):
    """Ordered, immutable tuple of Fields."""

    def __new__(cls, fields: Iterable[Field] = ()):
        return super().__new__(cls, tuple(fields))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self]

    @property
    def types(self) -> list[DataType]:
        return [f.dtype for f in self]

    def index(self, name: str) -> int:  # type: ignore[override]
        for i, f in enumerate(self):
            if f.name == name:
                return i
        raise KeyError(name)

    def to_json(self) -> list[dict]:
        return [{"name": f.name, "type": str(f.dtype), "nullable": f.nullable} for f in self]

    @classmethod
    def from_json(cls, items: list) -> "Schema":
        fields = []
        seen = set()
        for it in items:
            if not isinstance(it, dict) or "name" not in it or "type" not in it:
                raise PlanSyntaxError(f"bad schema entry {it!r}")
            if it["name"] in seen:
                raise PlanSyntaxError(f"duplicate column {it['name']!r}")
            seen.add(it["name"])
            fields.append(Field(it["name"], parse_type(it["type"]), bool(it.get("nullable", True))))
        return cls(fields)


# value conversions between text/python and the physical representation

def date_to_days(text: str) -> int:
    return (_dt.date.fromisoformat(text) - EPOCH).days


def days_to_date(days: int) -> str:
    return (EPOCH + _dt.timedelta(days=int(days))).isoformat()


_DEC_RE = re.compile(r"^([+-]?)(\d*)(?:\.(\d*))?$")


def parse_decimal(text: str, scale: int) -> int:
    """Exact conversion of a plain digit string to a scaled integer.

    Extra fractional digits are rounded half away from zero.
    """
    m = _DEC_RE.match(text.strip())
    if not m or not (m.group(2) or m.group(3)):
        raise ValueError(f"not a decimal: {text!r}")
    sign, whole, frac = m.group(1), m.group(2) or "0", m.group(3) or ""
    if len(frac) <= scale:
        v = int(whole + frac.ljust(scale, "0"))
    else:
        v = int(whole + frac[:scale])
        if int(frac[scale]) >= 5:
            v += 1
    return -v if sign == "-" else v


def format_decimal(v: int, scale: int) -> str:
    v = int(v)
    if scale == 0:
        return str(v)
    sign = "-" if v < 0 else ""
    digits = str(abs(v)).rjust(scale + 1, "0")
    return f"{sign}{digits[:-scale]}.{digits[-scale:]}"


def literal_to_physical(dtype: DataType, value: Any) -> Any:
    """Convert a document/CSV literal to the physical python value."""
    if value is None:
        return None
    k = dtype.kind
    try:
        if k is Kind.INT64:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if k is Kind.FLOAT64:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if k is Kind.DECIMAL:
            return parse_decimal(str(value), dtype.scale)
        if k is Kind.DATE32:
            return date_to_days(value) if isinstance(value, str) else int(value)
        if k is Kind.BOOL:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ValueError(value)
        if k is Kind.STRING:
            if not isinstance(value, str):
                raise ValueError(value)
            return value
    except (ValueError, TypeError) as e:
        raise TypeMismatch(f"literal {value!r} is not a valid {dtype}") from e
    raise TypeMismatch(f"unsupported literal type {dtype}")


def physical_to_literal(dtype: DataType, value: Any) -> Any:
    """Inverse of literal_to_physical, producing JSON-friendly values."""
    if value is None:
        return None
    k = dtype.kind
    if k is Kind.DECIMAL:
        return format_decimal(value, dtype.scale)
    if k is Kind.DATE32:
        return days_to_date(value)
    if k is Kind.INT64:
        return int(value)
    if k is Kind.FLOAT64:
        return float(value)
    if k is Kind.BOOL:
        return bool(value)
    return value
