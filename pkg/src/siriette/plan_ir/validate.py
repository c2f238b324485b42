"""Type resolution and lowering of a PlanGraph into a PhysicalPlan."""
from __future__ import annotations

from dataclasses import replace
from typing import Optional

from ..dtypes import BOOL, FLOAT64, INT64, MAX_DECIMAL_PRECISION, DataType, Field, Kind, Schema
from ..errors import OrdinalOutOfRange, PlanSyntaxError, TypeMismatch
from .expr import ColumnRef, resolve
from .nodes import (
    Aggregate,
    Catalog,
    Distinct,
    Exchange,
    Filter,
    HashJoin,
    Limit,
    Measure,
    PhysicalPlan,
    PhysNode,
    PlanGraph,
    Project,
    Read,
    RelNode,
    Sort,
)


def sum_type(t: DataType) -> DataType:
    if t.kind is Kind.INT64:
        return INT64
    if t.kind is Kind.DECIMAL:
        return DataType(Kind.DECIMAL, MAX_DECIMAL_PRECISION, t.scale)
    if t.kind is Kind.FLOAT64:
        return FLOAT64
    raise TypeMismatch(f"cannot sum {t}")


def state_types(fn: str, t: Optional[DataType]) -> list[DataType]:
    """Partial-state columns of one measure over input type ``t``."""
    if fn == "count":
        return [INT64]
    if fn == "sum":
        return [sum_type(t)]
    if fn in ("min", "max"):
        return [t]
    if fn == "avg":
        return [sum_type(t), INT64]
    raise TypeMismatch(f"unknown aggregate {fn}")


def result_type(fn: str, t: Optional[DataType]) -> DataType:
    if fn == "count":
        return INT64
    if fn == "sum":
        return sum_type(t)
    if fn in ("min", "max"):
        return t
    if fn == "avg":
        if not t.is_numeric:
            raise TypeMismatch(f"cannot average {t}")
        return FLOAT64
    raise TypeMismatch(f"unknown aggregate {fn}")


def measure_output_types(measures, phase: str) -> list:
    """Column types a measure list produces after keys, for any phase.

    ``partial`` and ``combine`` emit partial states, ``single`` and ``final``
    emit results. Merging measures already point at state columns, whose
    types are fixed points of state_types.
    """
    out: list = []
    for m in measures:
        t = m.arg.dtype if m.arg is not None else None
        if phase in ("partial", "combine"):
            out += state_types(m.fn, t)
        else:
            out.append(result_type(m.fn, t))
    return out


def measure_name(m: Measure, i: int) -> str:
    return m.name or f"{m.fn}_{i}"


def state_measures(measures, nkeys: int) -> tuple:
    """Measures that re-aggregate partial states laid out after ``nkeys`` keys."""
    out = []
    pos = nkeys
    for i, m in enumerate(measures):
        types = state_types(m.fn, m.arg.dtype if m.arg is not None else None)
        out.append(Measure(m.fn, ColumnRef(pos, dtype=types[0]), m.name))
        pos += len(types)
    return tuple(out)


def _resolve_measures(node: Aggregate, in_types: list) -> tuple:
    out = []
    for m in node.measures:
        if m.arg is None:
            if m.fn != "count" or node.phase == "final":
                raise TypeMismatch(f"{m.fn} needs an argument")
            out.append(m)
            continue
        arg = resolve(m.arg, in_types)
        t = arg.dtype
        if node.phase == "final":
            if not isinstance(arg, ColumnRef):
                raise TypeMismatch("final-phase measures must reference partial-state columns")
            if m.fn == "count" and t != INT64:
                raise TypeMismatch("final count merges INT64 partial counts")
            if m.fn in ("sum", "avg") and sum_type(t) != t:
                raise TypeMismatch(f"final {m.fn} expects a partial sum column, got {t}")
            if m.fn == "avg":
                if arg.index + 1 >= len(in_types) or in_types[arg.index + 1] != INT64:
                    raise TypeMismatch("final avg expects a partial count column after the sum")
        else:
            if m.fn in ("sum", "avg") and not t.is_numeric:
                raise TypeMismatch(f"cannot {m.fn} {t}")
        out.append(Measure(m.fn, arg, m.name))
    return tuple(out)


def _aggregate_fields(node: Aggregate, measures, in_schema: Schema) -> list:
    fields = [in_schema[k] for k in node.group_keys]
    for i, m in enumerate(measures):
        name = measure_name(m, i)
        t = m.arg.dtype if m.arg is not None else None
        if node.phase == "partial":
            types = state_types(m.fn, t)
            if m.fn == "avg":
                fields += [Field(f"{name}_sum", types[0]), Field(f"{name}_count", INT64, False)]
            else:
                fields.append(Field(name, types[0], m.fn != "count"))
        else:
            fields.append(Field(name, result_type(m.fn, t), m.fn != "count"))
    return fields


def _check_ordinals(ordinals, arity: int, what: str):
    for o in ordinals:
        if not (0 <= o < arity):
            raise OrdinalOutOfRange(f"{what}: ordinal {o} outside input of arity {arity}")


class _Lowering:
    def __init__(self, catalog: Catalog, groupby_override: Optional[str]):
        self.catalog = catalog
        self.override = groupby_override
        self.nodes: list[PhysNode] = []

    def add(self, rel, inputs, fields, **ann) -> PhysNode:
        n = PhysNode(len(self.nodes), rel, tuple(inputs), Schema(fields), **ann)
        self.nodes.append(n)
        return n

    def lower(self, rel: RelNode) -> PhysNode:
        kids = [self.lower(i) for i in rel.inputs]
        if isinstance(rel, Read):
            table = self.catalog.schema(rel.table)
            _check_ordinals(rel.columns, len(table), f"read {rel.table}")
            fields = [table[c] for c in rel.columns]
            pred = None
            if rel.predicate is not None:
                pred = resolve(rel.predicate, [f.dtype for f in fields])
                if pred.dtype != BOOL:
                    raise TypeMismatch("read predicate must be BOOL")
            return self.add(replace(rel, predicate=pred), [], fields)
        child = kids[0]
        in_schema = child.schema
        in_types = in_schema.types
        if isinstance(rel, Filter):
            cond = resolve(rel.condition, in_types)
            if cond.dtype != BOOL:
                raise TypeMismatch(f"filter condition must be BOOL, got {cond.dtype}")
            return self.add(replace(rel, input=child.rel, condition=cond), kids, list(in_schema))
        if isinstance(rel, Project):
            exprs = tuple(resolve(e, in_types) for e in rel.exprs)
            fields = []
            for i, e in enumerate(exprs):
                if rel.names is not None:
                    name = rel.names[i]
                elif isinstance(e, ColumnRef):
                    name = in_schema[e.index].name
                else:
                    name = f"expr{i}"
                nullable = in_schema[e.index].nullable if isinstance(e, ColumnRef) else True
                fields.append(Field(name, e.dtype, nullable))
            return self.add(replace(rel, input=child.rel, exprs=exprs), kids, fields)
        if isinstance(rel, HashJoin):
            left, right = kids
            for lk, rk in rel.keys:
                _check_ordinals([lk], len(left.schema), "join left key")
                _check_ordinals([rk], len(right.schema), "join right key")
                lt, rt = left.types[lk], right.types[rk]
                if lt != rt:
                    raise TypeMismatch(f"join key types differ: {lt} vs {rt}")
            if rel.join_type in ("semi", "anti"):
                fields = list(left.schema)
            elif rel.join_type == "left":
                fields = list(left.schema) + [Field(f.name, f.dtype, True) for f in right.schema]
            else:
                fields = list(left.schema) + list(right.schema)
            return self.add(replace(rel, left=left.rel, right=right.rel), kids, fields, build_side="right")
        if isinstance(rel, Aggregate):
            _check_ordinals(rel.group_keys, len(in_schema), "group key")
            measures = _resolve_measures(rel, in_types)
            fields = _aggregate_fields(rel, measures, in_schema)
            strategy = None
            if rel.group_keys:
                strategy = "sort" if any(in_types[k].kind is Kind.STRING for k in rel.group_keys) else "hash"
                if self.override in ("hash", "sort"):
                    strategy = self.override
            return self.add(replace(rel, input=child.rel, measures=measures), kids, fields, strategy=strategy)
        if isinstance(rel, Sort):
            _check_ordinals([k.ordinal for k in rel.keys], len(in_schema), "sort key")
            return self.add(replace(rel, input=child.rel), kids, list(in_schema))
        if isinstance(rel, Limit):
            return self.add(replace(rel, input=child.rel), kids, list(in_schema))
        if isinstance(rel, Exchange):
            if rel.pattern == "shuffle":
                _check_ordinals(rel.keys, len(in_schema), "shuffle key")
            if rel.pattern == "merge":
                if not isinstance(child.rel, Sort):
                    raise PlanSyntaxError("merge exchange must sit directly on a sort")
                sort_ords = tuple(k.ordinal for k in child.rel.keys)
                if rel.keys and tuple(rel.keys) != sort_ords:
                    raise PlanSyntaxError("merge exchange keys must match the sort keys below it")
            return self.add(replace(rel, input=child.rel), kids, list(in_schema))
        if isinstance(rel, Distinct):
            return self.add(replace(rel, input=child.rel), kids, list(in_schema))
        raise PlanSyntaxError(f"cannot lower {rel.kind}")


def validate_plan(g: PlanGraph, c: Catalog, groupby_override: Optional[str] = None) -> PhysicalPlan:
    """Type-check ``g`` against ``c`` and annotate every node.

    Group-by strategy is "sort" when any key is STRING, else "hash";
    ``groupby_override`` forces one of the two.
    """
    low = _Lowering(c, groupby_override)
    root = low.lower(g.root)
    return PhysicalPlan(root, g.catalog_ref, low.nodes)
