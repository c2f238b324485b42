import math
import struct
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from siriette.columnar import Batch, Column, concat_batches
from siriette.dtypes import BOOL, DECIMAL, FLOAT64, INT64, STRING
from siriette.errors import IndexOverflow
from siriette.kernels import VECTORIZED, get_backend
from siriette.kernels.aggregate import group_by_hash, group_by_sort, reduce
from siriette.kernels.expr_eval import eval_expr
from siriette.kernels.hashing import hash_columns
from siriette.kernels.join import filter, join_build, join_probe
from siriette.kernels.limit import limit
from siriette.kernels.sorting import sort
from siriette.plan_ir import Measure, SortKey
from siriette.testing import results_match

from helpers import col, lit, op, random_batch, typed

MASK64 = (1 << 64) - 1


def scalar_fnv(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def scalar_key_hash(values, types) -> int:
    h = 0
    for v, t in zip(values, types):
        if v is None:
            c = 0
        elif t == STRING:
            c = scalar_fnv(v.encode())
        elif t == FLOAT64:
            c = scalar_fnv(struct.pack("<d", v + 0.0))
        else:
            c = scalar_fnv(struct.pack("<q", v))
        h = (h * 31 + c) & MASK64
    return h


def measures(types, specs):
    return [Measure(fn, typed(arg, types) if arg is not None else None, f"m{i}") for i, (fn, arg) in enumerate(specs)]


# hashing

def test_fnv_reference_vectors():
    assert scalar_fnv(b"") == 0xCBF29CE484222325
    assert scalar_fnv(b"a") == 0xAF63DC4C8601EC8C
    b = Batch.from_rows([STRING], [("a",), ("",)])
    assert hash_columns(b.columns).tolist() == [0xAF63DC4C8601EC8C, 0xCBF29CE484222325]


def test_hash_matches_scalar_loop():
    types = [INT64, STRING, FLOAT64]
    b = random_batch(np.random.default_rng(3), types, 500, 0.3)
    got = hash_columns(b.columns).tolist()
    assert got == [scalar_key_hash(r, types) for r in b.to_rows()]


# expressions and filter

def test_eval_arith_with_null():
    b = Batch.from_rows([INT64], [(1,), (2,), (None,)])
    assert eval_expr(typed(op("+", col(0), lit("INT64", 1)), [INT64]), b).to_pylist() == [2, 3, None]


def test_eval_like():
    b = Batch.from_rows([STRING], [("PROMO A",), ("X",)])
    e = typed({"op": "like", "args": [col(0)], "pattern": "PROMO%"}, [STRING])
    assert eval_expr(e, b).to_pylist() == [True, False]


def test_kleene_logic():
    b = Batch.from_rows([BOOL, BOOL], [(None, False), (None, True), (False, None), (True, None)])
    types = [BOOL, BOOL]
    assert eval_expr(typed(op("and", col(0), col(1)), types), b).to_pylist() == [False, None, False, None]
    assert eval_expr(typed(op("or", col(0), col(1)), types), b).to_pylist() == [None, True, None, True]


def test_division_by_zero_is_null():
    b = Batch.from_rows([INT64, INT64], [(6, 3), (1, 0)])
    assert eval_expr(typed(op("/", col(0), col(1)), [INT64, INT64]), b).to_pylist() == [2.0, None]


def test_filter_examples():
    pred = Column.from_pylist(BOOL, [True, False, None, True])
    assert filter(None, pred).indices.tolist() == [0, 3]
    assert len(filter(None, Column.from_pylist(BOOL, [False] * 5))) == 0


def test_filter_matches_scalar_loop():
    rng = np.random.default_rng(11)
    vals = [None if rng.random() < 0.2 else bool(rng.random() < 0.5) for _ in range(10_000)]
    got = filter(None, Column.from_pylist(BOOL, vals)).indices.tolist()
    assert got == [i for i, v in enumerate(vals) if v is True]


# joins

def nested_loop(build_rows, probe_rows, join_type):
    pairs = [(bi, pi) for pi, p in enumerate(probe_rows) for bi, b in enumerate(build_rows)
             if None not in p and p == b]
    matched = {pi for _, pi in pairs}
    if join_type == "inner":
        return sorted(pairs)
    if join_type == "left":
        return sorted(pairs + [(-1, pi) for pi in range(len(probe_rows)) if pi not in matched])
    if join_type == "semi":
        return sorted(matched)
    return sorted(set(range(len(probe_rows))) - matched)


def probe_pairs(build_rows, probe_rows, types, join_type, limit=2**31 - 1):
    bb = Batch.from_rows(types, build_rows)
    pb = Batch.from_rows(types, probe_rows)
    bsel, psel = join_probe(join_build(bb.columns), pb.columns, join_type, limit)
    if join_type in ("semi", "anti"):
        return sorted(psel.indices.tolist())
    return sorted(zip(bsel.indices.tolist(), psel.indices.tolist()))


def test_join_examples():
    build, probe = [(1,), (2,)], [(2,), (3,)]
    assert probe_pairs(build, probe, [INT64], "inner") == [(1, 0)]
    assert probe_pairs(build, probe, [INT64], "anti") == [1]
    assert probe_pairs([], probe, [INT64], "inner") == []
    assert probe_pairs([(1,), (2,), (2,)], [(2,)], [INT64], "inner") == [(1, 0), (2, 0)]
    assert probe_pairs([(None,)], [(None,)], [INT64], "inner") == []


def test_join_overflow_signals():
    rows = [(i,) for i in range(300)]
    with pytest.raises(IndexOverflow):
        probe_pairs(rows, rows, [INT64], "inner", limit=255)


@pytest.mark.parametrize("join_type", ["inner", "left", "semi", "anti"])
def test_join_matches_nested_loop(join_type):
    rng = np.random.default_rng({"inner": 1, "left": 2, "semi": 3, "anti": 4}[join_type])
    types = [INT64, STRING]
    b = random_batch(rng, types, 1000, 0.1).to_rows()
    p = random_batch(rng, types, 1000, 0.1).to_rows()
    assert probe_pairs(b, p, types, join_type) == nested_loop(b, p, join_type)


def test_join_containment():
    rng = np.random.default_rng(5)
    b = random_batch(rng, [INT64], 300, 0.1).to_rows()
    p = random_batch(rng, [INT64], 300, 0.1).to_rows()
    inner = {pi for _, pi in probe_pairs(b, p, [INT64], "inner")}
    semi = set(probe_pairs(b, p, [INT64], "semi"))
    anti = set(probe_pairs(b, p, [INT64], "anti"))
    assert semi == inner
    assert anti == set(range(len(p))) - semi


# aggregation

def test_group_by_sum():
    b = Batch.from_rows([INT64, INT64], [(1, 10), (1, 20), (2, 5)])
    out = group_by_hash(b, [0], measures([INT64, INT64], [("sum", col(1))]))
    assert sorted(out.to_rows()) == [(1, 30), (2, 5)]


def test_empty_input_conventions():
    b = Batch.empty([INT64, INT64])
    ms = measures([INT64, INT64], [("count", None), ("sum", col(1)), ("min", col(1)), ("avg", col(1))])
    assert reduce(b, ms).to_rows() == [(0, None, None, None)]
    assert group_by_hash(b, [0], ms).row_count == 0


def test_group_by_sort_strings_ordered():
    b = Batch.from_rows([STRING], [("b",), ("a",), ("a",)])
    assert group_by_sort(b, [0], measures([STRING], [("count", None)])).to_rows() == [("a", 2), ("b", 1)]


def test_single_group():
    b = Batch.from_rows([INT64, INT64], [(7, 1), (7, 2)])
    assert group_by_sort(b, [0], measures([INT64, INT64], [("max", col(1))])).to_rows() == [(7, 2)]


def test_nulls_form_a_group_and_sort_last():
    b = Batch.from_rows([INT64, INT64], [(None, 1), (2, 1), (None, 3)])
    out = group_by_sort(b, [0], measures([INT64, INT64], [("sum", col(1))]))
    assert out.to_rows() == [(2, 1), (None, 4)]


AGG_TYPES = [INT64, STRING, DECIMAL(12, 2), FLOAT64]
AGG_SPECS = [("sum", col(2)), ("count", None), ("min", col(1)), ("max", col(3)), ("avg", col(0)),
             ("avg", col(2)), ("count", col(3)), ("sum", col(3))]


def group_oracle(rows, keys, specs):
    groups = defaultdict(list)
    for r in rows:
        groups[tuple(r[k] for k in keys)].append(r)
    out = []
    for key, rs in groups.items():
        vals = []
        for fn, arg in specs:
            xs = [r[arg["index"]] for r in rs] if arg else [1] * len(rs)
            xs = [x for x in xs if x is not None]
            if fn == "count":
                vals.append(len(xs))
            elif not xs:
                vals.append(None)
            elif fn == "sum":
                vals.append(math.fsum(xs) if isinstance(xs[0], float) else sum(xs))
            elif fn == "min":
                vals.append(min(xs))
            elif fn == "max":
                vals.append(max(xs))
            else:
                scale = 100 if arg["index"] == 2 else 1
                vals.append(sum(xs) / scale / len(xs))
        out.append(key + tuple(vals))
    return out


@given(st.integers(0, 2**32 - 1), st.integers(0, 400), st.sampled_from([0.0, 0.3]))
def test_group_by_matches_oracle_and_strategies_agree(seed, n, null_p):
    b = random_batch(np.random.default_rng(seed), AGG_TYPES, n, null_p)
    ms = measures(AGG_TYPES, AGG_SPECS)
    h = group_by_hash(b, [0], ms).to_rows()
    s = group_by_sort(b, [1, 0], ms).to_rows()
    assert results_match(h, group_oracle(b.to_rows(), [0], AGG_SPECS))
    assert results_match(s, group_oracle(b.to_rows(), [1, 0], AGG_SPECS))
    assert results_match(group_by_sort(b, [0], ms).to_rows(), h)


@given(st.integers(0, 2**32 - 1), st.integers(0, 300), st.integers(0, 300))
def test_merge_law(seed, n, cut):
    """final(merge(partials over any split)) = single phase."""
    b = random_batch(np.random.default_rng(seed), AGG_TYPES, n, 0.3)
    cut = min(cut, n)
    ms = measures(AGG_TYPES, AGG_SPECS)
    single = group_by_hash(b, [1], ms)
    parts = [group_by_hash(b.slice(0, cut), [1], ms, "partial"), group_by_hash(b.slice(cut, n), [1], ms, "partial")]
    merged = concat_batches(parts)
    from siriette.plan_ir import state_measures

    final = group_by_hash(merged, [0], state_measures(ms, 1), "final")
    assert results_match(final.to_rows(), single.to_rows())
    keyless_parts = concat_batches([reduce(b.slice(0, cut), ms, "partial"), reduce(b.slice(cut, n), ms, "partial")])
    assert results_match(reduce(keyless_parts, state_measures(ms, 0), "final").to_rows(), reduce(b, ms).to_rows())


def test_reduce_examples():
    b = Batch.from_rows([INT64, INT64], [(1, None), (2, None), (3, None)])
    assert reduce(b, measures([INT64, INT64], [("sum", col(0)), ("min", col(1))])).to_rows() == [(6, None)]


def test_reduce_q6_matches_scalar_loop(tpch):
    li = tpch["lineitem"]
    rows = [r for r in li.to_rows() if 8766 <= r[10] < 9131 and 5 <= r[6] <= 7 and r[4] < 2400]
    expected = sum(r[5] * r[6] for r in rows)
    b = concat_batches([x for x in li.batches]).select([5, 6])
    t = [DECIMAL(15, 2), DECIMAL(15, 2)]
    keep = [i for i, r in enumerate(li.to_rows()) if 8766 <= r[10] < 9131 and 5 <= r[6] <= 7 and r[4] < 2400]
    from siriette.columnar import SelectionVector

    out = reduce(b.take(SelectionVector.wide(keep)), measures(t, [("sum", op("*", col(0), col(1)))]))
    assert out.to_rows() == [(expected,)]


# sort and limit

def test_sort_examples():
    assert sort(Batch.from_rows([INT64], [(3,), (1,), (2,)]), [SortKey(0)]).indices.tolist() == [1, 2, 0]
    ties = Batch.from_rows([INT64, STRING], [(1, "a"), (1, "b")])
    assert sort(ties, [SortKey(0)]).indices.tolist() == [0, 1]


def test_sort_matches_comparison_oracle():
    rng = np.random.default_rng(9)
    types = [INT64, STRING, FLOAT64]
    b = random_batch(rng, types, 1000, 0.2)
    keys = [SortKey(1, True, False), SortKey(0, False, True), SortKey(2, True, True)]
    rows = b.to_rows()
    order = list(range(len(rows)))
    # stable passes from the least significant key; sorted() keeps ties in order even with reverse=True
    for k in reversed(keys):
        nulls = [i for i in order if rows[i][k.ordinal] is None]
        vals = sorted((i for i in order if rows[i][k.ordinal] is not None),
                      key=lambda i: rows[i][k.ordinal], reverse=k.descending)
        order = nulls + vals if k.nulls_first else vals + nulls
    assert sort(b, keys).indices.tolist() == order


def test_limit_examples():
    batches = [Batch.from_rows([INT64], [(i,) for i in range(j, j + 4)]) for j in (0, 4, 8)]
    assert sum(b.row_count for b in limit(batches, 0)) == 0
    assert [r for b in limit(batches, 100) for r in b.to_rows()] == [(i,) for i in range(12)]
    out = list(limit(batches, 6))
    assert sum(b.row_count for b in out) == 6
    assert [r for b in out for r in b.to_rows()] == [(i,) for i in range(6)]


# backend swap

def test_backend_registry():
    assert get_backend("vectorized") is VECTORIZED
    assert get_backend("oracle").name == "oracle"


def test_backend_swap_same_results(tpch_engine):
    from siriette import queries

    for name in ("q1", "q3", "q6", "left_join", "semi_join", "anti_join", "expressions", "top_orders"):
        d = queries.load(name)
        native, _ = tpch_engine.execute_plan(tpch_engine.plan(d))
        swapped, _ = tpch_engine.execute_plan(tpch_engine.plan(d), backend="oracle")
        assert results_match(swapped.to_rows(), native.to_rows(), ordered=True), name
