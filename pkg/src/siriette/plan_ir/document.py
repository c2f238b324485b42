"""Reading and writing plan documents (JSON text, see docs/plan_format.md)."""
from __future__ import annotations

import json
from typing import Any, Union

from ..dtypes import parse_type, literal_to_physical, physical_to_literal
from ..errors import PlanSyntaxError, TypeMismatch, UnknownFunction, UnknownRelation
from .expr import ARITH_OPS, COMPARE_OPS, Arith, BoolOp, Case, Cast, ColumnRef, Compare, Expr, Like, Literal
from .nodes import (
    AGG_FUNCS,
    ALL_RELATIONS,
    EXCHANGE_PATTERNS,
    JOIN_TYPES,
    PHASES,
    Aggregate,
    Distinct,
    Exchange,
    Filter,
    HashJoin,
    Limit,
    Measure,
    PlanGraph,
    Project,
    Read,
    RelNode,
    Sort,
    SortKey,
)

_ARITY = {"read": 0, "filter": 1, "project": 1, "hash_join": 2, "aggregate": 1, "sort": 1,
          "limit": 1, "exchange": 1, "distinct": 1}


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise PlanSyntaxError(f"{where}: missing field {key!r}")
    return obj[key]


def _int_list(v: Any, where: str) -> tuple:
    if not isinstance(v, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in v):
        raise PlanSyntaxError(f"{where}: expected a list of integers, got {v!r}")
    return tuple(v)


def parse_expr(obj: Any) -> Expr:
    if not isinstance(obj, dict) or "op" not in obj:
        raise PlanSyntaxError(f"expression must be an object with 'op': {obj!r}")
    op = obj["op"]
    args = obj.get("args", [])
    if not isinstance(args, list):
        raise PlanSyntaxError(f"{op}: 'args' must be a list")

    def need(n):
        if len(args) != n:
            raise PlanSyntaxError(f"{op} takes {n} argument(s), got {len(args)}")
        return [parse_expr(a) for a in args]

    if op == "col":
        idx = _require(obj, "index", "col")
        if not isinstance(idx, int) or isinstance(idx, bool):
            raise PlanSyntaxError(f"col index must be an integer: {idx!r}")
        return ColumnRef(idx)
    if op == "lit":
        t = parse_type(_require(obj, "type", "lit"))
        try:
            return Literal(t, literal_to_physical(t, obj.get("value")))
        except TypeMismatch as e:
            raise PlanSyntaxError(str(e)) from None
    if op in ARITH_OPS:
        l, r = need(2)
        return Arith(op, l, r)
    if op in COMPARE_OPS:
        l, r = need(2)
        return Compare(op, l, r)
    if op in ("and", "or"):
        if len(args) < 2:
            raise PlanSyntaxError(f"{op} takes at least two arguments")
        return BoolOp(op, tuple(parse_expr(a) for a in args))
    if op == "not":
        return BoolOp("not", tuple(need(1)))
    if op == "like":
        pattern = _require(obj, "pattern", "like")
        if not isinstance(pattern, str):
            raise PlanSyntaxError("like pattern must be a string")
        return Like(need(1)[0], pattern)
    if op == "case":
        if len(args) < 2:
            raise PlanSyntaxError("case takes at least a condition and a value")
        parsed = [parse_expr(a) for a in args]
        otherwise = parsed.pop() if len(parsed) % 2 else None
        whens = tuple((parsed[i], parsed[i + 1]) for i in range(0, len(parsed), 2))
        return Case(whens, otherwise)
    if op == "cast":
        return Cast(need(1)[0], parse_type(_require(obj, "type", "cast")))
    raise UnknownFunction(f"unknown expression operator {op!r}")


def parse_node(obj: Any, relations: frozenset = ALL_RELATIONS) -> RelNode:
    if not isinstance(obj, dict):
        raise PlanSyntaxError(f"plan node must be an object, got {type(obj).__name__}")
    kind = _require(obj, "kind", "node")
    if kind not in relations:
        raise UnknownRelation(f"relation kind {kind!r} is not supported")
    inputs = obj.get("inputs", [])
    if not isinstance(inputs, list):
        raise PlanSyntaxError(f"{kind}: 'inputs' must be a list")
    if len(inputs) != _ARITY[kind]:
        raise PlanSyntaxError(f"{kind} takes {_ARITY[kind]} input(s), got {len(inputs)}")
    kids = [parse_node(i, relations) for i in inputs]

    if kind == "read":
        pred = obj.get("predicate")
        return Read(str(_require(obj, "table", kind)), _int_list(_require(obj, "columns", kind), kind),
                    parse_expr(pred) if pred is not None else None)
    if kind == "filter":
        return Filter(kids[0], parse_expr(_require(obj, "condition", kind)))
    if kind == "project":
        exprs = _require(obj, "exprs", kind)
        if not isinstance(exprs, list):
            raise PlanSyntaxError("project: 'exprs' must be a list")
        names = obj.get("names")
        if names is not None and (not isinstance(names, list) or len(names) != len(exprs)):
            raise PlanSyntaxError("project: 'names' must match 'exprs' in length")
        return Project(kids[0], tuple(parse_expr(e) for e in exprs), tuple(names) if names is not None else None)
    if kind == "hash_join":
        keys = _require(obj, "keys", kind)
        if not isinstance(keys, list) or not keys or not all(isinstance(k, list) and len(k) == 2 for k in keys):
            raise PlanSyntaxError("hash_join: 'keys' must be a non-empty list of [left, right] pairs")
        jt = obj.get("join_type", "inner")
        if jt not in JOIN_TYPES:
            raise PlanSyntaxError(f"hash_join: unknown join_type {jt!r}")
        return HashJoin(kids[0], kids[1], tuple(_int_list(k, kind) for k in keys), jt)
    if kind == "aggregate":
        measures = []
        for m in _require(obj, "measures", kind):
            if not isinstance(m, dict):
                raise PlanSyntaxError("aggregate: measures must be objects")
            fn = _require(m, "fn", "measure")
            if fn not in AGG_FUNCS:
                raise UnknownFunction(f"unknown aggregate function {fn!r}")
            arg = m.get("arg")
            if arg is None and fn != "count":
                raise PlanSyntaxError(f"{fn} needs an argument")
            measures.append(Measure(fn, parse_expr(arg) if arg is not None else None, m.get("name")))
        phase = obj.get("phase", "single")
        if phase not in PHASES:
            raise PlanSyntaxError(f"aggregate: unknown phase {phase!r}")
        return Aggregate(kids[0], _int_list(obj.get("group_keys", []), kind), tuple(measures), phase)
    if kind == "sort":
        keys = []
        for k in _require(obj, "keys", kind):
            if not isinstance(k, dict):
                raise PlanSyntaxError("sort: keys must be objects")
            order = k.get("order", "asc")
            nulls = k.get("nulls", "last")
            if order not in ("asc", "desc") or nulls not in ("first", "last"):
                raise PlanSyntaxError(f"sort: bad key {k!r}")
            ordinal = _require(k, "ordinal", "sort key")
            if not isinstance(ordinal, int) or isinstance(ordinal, bool):
                raise PlanSyntaxError("sort: ordinal must be an integer")
            keys.append(SortKey(ordinal, order == "desc", nulls == "first"))
        if not keys:
            raise PlanSyntaxError("sort needs at least one key")
        return Sort(kids[0], tuple(keys))
    if kind == "limit":
        n = _require(obj, "n", kind)
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise PlanSyntaxError(f"limit: n must be a non-negative integer, got {n!r}")
        return Limit(kids[0], n)
    if kind == "exchange":
        pattern = _require(obj, "pattern", kind)
        if pattern not in EXCHANGE_PATTERNS:
            raise PlanSyntaxError(f"exchange: unknown pattern {pattern!r}")
        keys = _int_list(obj.get("keys", []), kind)
        targets = _int_list(obj.get("targets", []), kind)
        if pattern == "shuffle" and not keys:
            raise PlanSyntaxError("shuffle exchange needs key ordinals")
        if pattern == "multicast" and not targets:
            raise PlanSyntaxError("multicast exchange needs a target set")
        if pattern == "merge" and len(targets) > 1:
            raise PlanSyntaxError("merge exchange has a single target")
        return Exchange(kids[0], pattern, keys, targets)
    if kind == "distinct":
        return Distinct(kids[0])
    raise UnknownRelation(f"relation kind {kind!r} is not supported")  # pragma: no cover


def parse_plan(document: Union[bytes, str], relations: frozenset = ALL_RELATIONS) -> PlanGraph:
    """Parse a plan document into an untyped PlanGraph.

    ``relations`` is the set of relation kinds the caller can execute;
    anything else raises UnknownRelation.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as e:
            raise PlanSyntaxError(f"plan document is not UTF-8: {e}") from None
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as e:
        raise PlanSyntaxError(f"malformed plan document: {e}") from None
    if not isinstance(obj, dict):
        raise PlanSyntaxError("plan document must be an object")
    root = parse_node(_require(obj, "root", "document"), relations)
    ref = obj.get("catalog_ref", "")
    if not isinstance(ref, str):
        raise PlanSyntaxError("catalog_ref must be a string")
    return PlanGraph(root, ref)


# printing

def expr_to_json(e: Expr) -> dict:
    if isinstance(e, ColumnRef):
        return {"op": "col", "index": e.index}
    if isinstance(e, Literal):
        return {"op": "lit", "type": str(e.type), "value": physical_to_literal(e.type, e.value)}
    if isinstance(e, (Arith, Compare)):
        return {"op": e.op, "args": [expr_to_json(e.left), expr_to_json(e.right)]}
    if isinstance(e, BoolOp):
        return {"op": e.op, "args": [expr_to_json(a) for a in e.args]}
    if isinstance(e, Like):
        return {"op": "like", "args": [expr_to_json(e.input)], "pattern": e.pattern}
    if isinstance(e, Case):
        args = []
        for c, v in e.whens:
            args += [expr_to_json(c), expr_to_json(v)]
        if e.otherwise is not None:
            args.append(expr_to_json(e.otherwise))
        return {"op": "case", "args": args}
    if isinstance(e, Cast):
        return {"op": "cast", "args": [expr_to_json(e.input)], "type": str(e.target)}
    raise UnknownFunction(type(e).__name__)


def node_to_json(n: RelNode) -> dict:
    out: dict = {"kind": n.kind, "inputs": [node_to_json(i) for i in n.inputs]}
    if isinstance(n, Read):
        out["table"] = n.table
        out["columns"] = list(n.columns)
        if n.predicate is not None:
            out["predicate"] = expr_to_json(n.predicate)
    elif isinstance(n, Filter):
        out["condition"] = expr_to_json(n.condition)
    elif isinstance(n, Project):
        out["exprs"] = [expr_to_json(e) for e in n.exprs]
        if n.names is not None:
            out["names"] = list(n.names)
    elif isinstance(n, HashJoin):
        out["keys"] = [list(k) for k in n.keys]
        out["join_type"] = n.join_type
    elif isinstance(n, Aggregate):
        out["group_keys"] = list(n.group_keys)
        ms = []
        for m in n.measures:
            d = {"fn": m.fn, "arg": expr_to_json(m.arg) if m.arg is not None else None}
            if m.name is not None:
                d["name"] = m.name
            ms.append(d)
        out["measures"] = ms
        out["phase"] = n.phase
    elif isinstance(n, Sort):
        out["keys"] = [
            {"ordinal": k.ordinal, "order": "desc" if k.descending else "asc", "nulls": "first" if k.nulls_first else "last"}
            for k in n.keys
        ]
    elif isinstance(n, Limit):
        out["n"] = n.n
    elif isinstance(n, Exchange):
        out["pattern"] = n.pattern
        if n.keys:
            out["keys"] = list(n.keys)
        if n.targets:
            out["targets"] = list(n.targets)
    return out


def print_plan(g: PlanGraph) -> bytes:
    """Canonical document text for a PlanGraph."""
    doc = {"catalog_ref": g.catalog_ref, "root": node_to_json(g.root)}
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
