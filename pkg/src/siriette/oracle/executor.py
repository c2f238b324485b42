"""Tuple-at-a-time reference executor.

Deliberately plain: index nested-loop joins, sorted-map group-by and a
comparison sort, all over python tuples. It defines the semantics every
vectorized kernel is checked against, so it shares only the plan IR and the
columnar containers with the native engine.
"""
from __future__ import annotations

from typing import Mapping, Optional

from ..columnar import Table
from ..errors import MissingTable, UnsupportedFeature
from ..plan_ir import PhysicalPlan, PhysNode
from ..plan_ir.validate import state_types
from .rows import Accumulator, evaluate, group_order_key, sort_rows


def _rows_of(t: Table) -> list:
    return t.to_rows()


def aggregate_rows(rows: list, group_keys, measures, phase: str) -> list:
    """Group ``rows`` and emit one output tuple per group, keys first.

    ``combine`` merges partial states like ``final`` but emits states again.
    """
    merging = phase in ("final", "combine")
    groups: dict = {}
    for r in rows:
        key = tuple(r[k] for k in group_keys)
        accs = groups.get(key)
        if accs is None:
            accs = groups[key] = [
                Accumulator(m.fn, m.arg.dtype if m.arg is not None else None) for m in measures
            ]
        for acc, m in zip(accs, measures):
            if m.arg is None:
                acc.add(1)
            elif merging:
                width = len(state_types(m.fn, m.arg.dtype))
                start = m.arg.index
                acc.merge(r[start:start + width])
            else:
                acc.add(evaluate(m.arg, r))
    if not group_keys and not groups:
        groups[()] = [Accumulator(m.fn, m.arg.dtype if m.arg is not None else None) for m in measures]
    out = []
    for key in sorted(groups, key=group_order_key):
        vals = list(key)
        for acc, m in zip(groups[key], measures):
            if phase in ("partial", "combine"):
                vals.extend(acc.state())
            else:
                vals.append(acc.result(count_star=m.arg is None))
        out.append(tuple(vals))
    return out


def join_rows(left: list, right: list, keys, join_type: str, right_width: int) -> list:
    """Index nested-loop join (right side indexed), probe-major output order."""
    index: dict = {}
    for j, r in enumerate(right):
        k = tuple(r[rk] for _, rk in keys)
        if any(v is None for v in k):
            continue
        index.setdefault(tuple(v + 0.0 if isinstance(v, float) else v for v in k), []).append(j)
    out = []
    for l in left:
        k = tuple(l[lk] for lk, _ in keys)
        matches = [] if any(v is None for v in k) else index.get(tuple(v + 0.0 if isinstance(v, float) else v for v in k), [])
        if join_type == "inner":
            out.extend(l + right[j] for j in matches)
        elif join_type == "left":
            if matches:
                out.extend(l + right[j] for j in matches)
            else:
                out.append(l + (None,) * right_width)
        elif join_type == "semi":
            if matches:
                out.append(l)
        elif join_type == "anti":
            if not matches:
                out.append(l)
        else:
            raise UnsupportedFeature(f"join type {join_type}")
    return out


class _Oracle:
    def __init__(self, tables: Mapping[str, Table], exchange_inputs: Optional[Mapping[int, Table]]):
        self.tables = tables
        self.exchange_inputs = exchange_inputs or {}

    def run(self, n: PhysNode) -> list:
        rel = n.rel
        k = n.kind
        if k == "exchange" and n.id in self.exchange_inputs:
            return _rows_of(self.exchange_inputs[n.id])
        if k == "read":
            try:
                table = self.tables[rel.table]
            except KeyError:
                raise MissingTable(f"table {rel.table} is not loaded") from None
            # only the projected columns are turned into python values
            rows = list(zip(*(table.column_values(c) for c in rel.columns))) if table.num_rows else []
            if rel.predicate is not None:
                rows = [r for r in rows if evaluate(rel.predicate, r) is True]
            return rows
        if k == "hash_join":
            left, right = self.run(n.inputs[0]), self.run(n.inputs[1])
            return join_rows(left, right, rel.keys, rel.join_type, len(n.inputs[1].schema))
        rows = self.run(n.inputs[0])
        if k == "filter":
            return [r for r in rows if evaluate(rel.condition, r) is True]
        if k == "project":
            return [tuple(evaluate(e, r) for e in rel.exprs) for r in rows]
        if k == "aggregate":
            return aggregate_rows(rows, rel.group_keys, rel.measures, rel.phase)
        if k == "sort":
            return sort_rows(rows, rel.keys)
        if k == "limit":
            return rows[: rel.n]
        if k == "exchange":
            return rows
        if k == "distinct":
            seen: dict = {}
            for r in rows:
                seen.setdefault(tuple(v + 0.0 if isinstance(v, float) else v for v in r), r)
            return list(seen.values())
        raise UnsupportedFeature(f"oracle has no relation {k}")


def oracle_execute(
    plan: PhysicalPlan,
    tables: Mapping[str, Table],
    exchange_inputs: Optional[Mapping[int, Table]] = None,
) -> Table:
    """Evaluate ``plan`` row by row; returns the root output as a table."""
    root = plan.root if isinstance(plan, PhysicalPlan) else plan
    rows = _Oracle(tables, exchange_inputs).run(root)
    return Table.from_rows("result", root.schema, rows)
