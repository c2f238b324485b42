"""Small builders shared by the test modules."""
import json

from siriette.columnar import Batch, Column, Table
from siriette.dtypes import BOOL, DATE32, DECIMAL, FLOAT64, INT64, STRING, Field, Schema
from siriette.plan_ir import parse_expr
from siriette.plan_ir.expr import resolve

ALL_TYPES = [INT64, FLOAT64, DECIMAL(12, 2), DATE32, BOOL, STRING]


def col(i):
    return {"op": "col", "index": i}


def lit(t, v):
    return {"op": "lit", "type": t, "value": v}


def op(o, *args):
    return {"op": o, "args": list(args)}


def read(table, cols, pred=None):
    d = {"kind": "read", "inputs": [], "table": table, "columns": list(cols)}
    if pred is not None:
        d["predicate"] = pred
    return d


def node(kind, *inputs, **fields):
    return {"kind": kind, "inputs": list(inputs), **fields}


def typed(expr, types):
    """Parse an expression document and type it against ``types``."""
    return resolve(parse_expr(expr), list(types))


def doc(root) -> bytes:
    return json.dumps({"catalog_ref": "test", "root": root}).encode()


def table(name, fields, rows, batch_rows=65536):
    schema = Schema(tuple(Field(n, t) for n, t in fields))
    return Table.from_rows(name, schema, rows, batch_rows)


def random_values(rng, dtype, n, null_p):
    """Python values for one column; None marks nulls."""
    k = str(dtype)
    if k == "INT64":
        vals = rng.integers(-20, 20, n).tolist()
    elif k == "FLOAT64":
        vals = (rng.integers(-2000, 2000, n) / 8).tolist()
    elif k.startswith("DECIMAL"):
        vals = rng.integers(-10**6, 10**6, n).tolist()
    elif k == "DATE32":
        vals = rng.integers(8000, 8040, n).tolist()
    elif k == "BOOL":
        vals = (rng.random(n) < 0.5).tolist()
    else:
        words = ["", "a", "ab", "abc", "b", "ba", "PROMO x", "PROMO", "zz%", "q_1"]
        vals = [words[i] for i in rng.integers(0, len(words), n)]
    if null_p:
        nulls = rng.random(n) < null_p
        vals = [None if z else v for v, z in zip(vals, nulls)]
    return vals


def random_batch(rng, types, n, null_p=0.0):
    cols = [random_values(rng, t, n, null_p) for t in types]
    return Batch([Column.from_pylist(t, c) for t, c in zip(types, cols)], n, types)
