"""Reference executor on tiny hand-checked inputs, and the fallback path."""
import pytest

from siriette import Engine, queries, run_with_fallback
from siriette.config import EngineConfig
from siriette.dtypes import DECIMAL, FLOAT64, INT64, STRING
from siriette.errors import CacheFull, IndexOverflow, ProcessingExhausted, UnknownRelation, UnsupportedFeature
from siriette.oracle import run_oracle
from siriette.testing import first_difference

from helpers import col, doc, lit, node, op, read, table

MiB = 1 << 20


@pytest.fixture()
def eng():
    e = Engine()
    e.load_table(table("t", [("a", INT64), ("s", STRING), ("d", DECIMAL(12, 2))], [
        (1, "x", 150),
        (2, "y", 25),
        (3, None, None),
        (None, "x", 100),
        (2, "x", -50),
    ]))
    e.load_table(table("u", [("a", INT64), ("v", FLOAT64)], [(2, 0.5), (2, 1.5), (4, 2.0), (None, 9.0)]))
    e.load_table(table("empty", [("a", INT64), ("s", STRING)], []))
    return e


def both(e, d, ordered=True):
    """Oracle rows, after checking the native engine agrees."""
    expected = run_oracle(e, d).to_rows()
    native, _ = e.run_native(d)
    assert first_difference(native.to_rows(), expected, ordered=ordered) is None
    return expected


# single operators, expected values worked by hand

def test_read_with_predicate(eng):
    d = doc(read("t", [0, 1], pred=op("=", col(1), lit("STRING", "x"))))
    assert both(eng, d) == [(1, "x"), (None, "x"), (2, "x")]


def test_filter_drops_null_comparisons(eng):
    d = doc(node("filter", read("t", [0, 1]), condition=op(">=", col(0), lit("INT64", 2))))
    assert both(eng, d) == [(2, "y"), (3, None), (2, "x")]


def test_filter_three_valued_or(eng):
    cond = op("or", op("=", col(0), lit("INT64", 3)), op("like", col(1)) | {"pattern": "y%"})
    d = doc(node("filter", read("t", [0, 1]), condition=cond))
    assert both(eng, d) == [(2, "y"), (3, None)]


def test_project_decimal_and_division(eng):
    exprs = [
        op("+", col(1), lit("DECIMAL(12,2)", "0.25")),
        op("/", col(0), lit("INT64", 2)),
        op("*", col(0), col(0)),
    ]
    d = doc(node("project", read("t", [0, 2]), exprs=exprs))
    # decimals travel as scaled integers: 1.50 + 0.25 = 1.75 -> 175
    assert both(eng, d) == [(175, 0.5, 1), (50, 1.0, 4), (None, 1.5, 9), (125, None, None), (-25, 1.0, 4)]


def test_division_by_zero_is_null(eng):
    d = doc(node("project", read("t", [0]), exprs=[op("/", col(0), lit("INT64", 0))]))
    assert both(eng, d) == [(None,)] * 5


def test_case_and_cast(eng):
    e = op("case", op("<", col(0), lit("INT64", 2)), lit("STRING", "lo"), lit("STRING", "hi"))
    c = op("cast", col(0)) | {"type": "FLOAT64"}
    d = doc(node("project", read("t", [0]), exprs=[e, c]))
    assert both(eng, d) == [("lo", 1.0), ("hi", 2.0), ("hi", 3.0), ("hi", None), ("hi", 2.0)]


@pytest.mark.parametrize("join_type, expected", [
    ("inner", [(2, "y", 2, 0.5), (2, "y", 2, 1.5), (2, "x", 2, 0.5), (2, "x", 2, 1.5)]),
    ("left", [
        (1, "x", None, None),
        (2, "y", 2, 0.5), (2, "y", 2, 1.5),
        (3, None, None, None),
        (None, "x", None, None),
        (2, "x", 2, 0.5), (2, "x", 2, 1.5),
    ]),
    ("semi", [(2, "y"), (2, "x")]),
    ("anti", [(1, "x"), (3, None), (None, "x")]),
])
def test_join_types(eng, join_type, expected):
    d = doc(node("hash_join", read("t", [0, 1]), read("u", [0, 1]), keys=[[0, 0]], join_type=join_type))
    assert both(eng, d, ordered=False) == expected


def test_group_by_with_nulls(eng):
    measures = [
        {"fn": "count", "arg": None},
        {"fn": "count", "arg": col(0)},
        {"fn": "sum", "arg": col(2)},
        {"fn": "avg", "arg": col(0)},
        {"fn": "min", "arg": col(0)},
        {"fn": "max", "arg": col(2)},
    ]
    d = doc(node("aggregate", read("t", [0, 1, 2]), group_keys=[1], measures=measures))
    # groups ascending, null group last
    assert both(eng, d, ordered=False) == [
        ("x", 3, 2, 200, 1.5, 1, 150),
        ("y", 1, 1, 25, 2.0, 2, 25),
        (None, 1, 1, None, 3.0, 3, None),
    ]


def test_reduce_single_row(eng):
    measures = [{"fn": "sum", "arg": col(0)}, {"fn": "avg", "arg": col(1)}, {"fn": "max", "arg": col(0)}]
    d = doc(node("aggregate", read("t", [0, 2]), measures=measures))
    # avg of 1.50, 0.25, 1.00, -0.50 = 2.25 / 4
    assert both(eng, d) == [(8, 0.5625, 3)]


def test_sort_desc_nulls_first(eng):
    keys = [{"ordinal": 0, "order": "desc", "nulls": "first"}, {"ordinal": 1}]
    d = doc(node("sort", read("t", [0, 1]), keys=keys))
    assert both(eng, d) == [(None, "x"), (3, None), (2, "x"), (2, "y"), (1, "x")]


def test_sort_is_stable_on_ties(eng):
    d = doc(node("sort", read("t", [1, 0]), keys=[{"ordinal": 0, "nulls": "first"}]))
    assert both(eng, d) == [(None, 3), ("x", 1), ("x", None), ("x", 2), ("y", 2)]


def test_limit(eng):
    d = doc(node("limit", node("sort", read("u", [1]), keys=[{"ordinal": 0, "order": "desc"}]), n=2))
    assert both(eng, d) == [(9.0,), (2.0,)]


def test_distinct_keeps_first_occurrence(eng):
    d = doc(node("distinct", read("t", [1])))
    assert run_oracle(eng, d).to_rows() == [("x",), ("y",), (None,)]


# empty inputs

def test_empty_reduce_emits_one_row(eng):
    measures = [
        {"fn": "count", "arg": None},
        {"fn": "count", "arg": col(0)},
        {"fn": "sum", "arg": col(0)},
        {"fn": "avg", "arg": col(0)},
        {"fn": "min", "arg": col(1)},
    ]
    d = doc(node("aggregate", read("empty", [0, 1]), measures=measures))
    assert both(eng, d) == [(0, 0, None, None, None)]


def test_empty_group_by_emits_nothing(eng):
    d = doc(node("aggregate", read("empty", [0, 1]), group_keys=[1], measures=[{"fn": "count", "arg": None}]))
    assert both(eng, d) == []


@pytest.mark.parametrize("join_type", ["inner", "left", "semi", "anti"])
def test_join_against_empty_build(eng, join_type):
    d = doc(node("hash_join", read("u", [0]), read("empty", [0]), keys=[[0, 0]], join_type=join_type))
    expected = {
        "inner": [],
        "semi": [],
        "left": [(2, None), (2, None), (4, None), (None, None)],
        "anti": [(2,), (2,), (4,), (None,)],
    }[join_type]
    assert both(eng, d) == expected


def test_empty_sort_and_limit(eng):
    d = doc(node("limit", node("sort", read("empty", [1]), keys=[{"ordinal": 0}]), n=3))
    assert both(eng, d) == []


# fallback

@pytest.mark.parametrize("name", [n for n in queries.names() if n != "distinct_segments"])
def test_covered_plans_stay_native(tpch_engine, name):
    _, used = run_with_fallback(tpch_engine, queries.load(name))
    assert used.tag == "native" and used.reason is None


def test_distinct_falls_back(tpch_engine):
    d = queries.load("distinct_segments")
    result, used = run_with_fallback(tpch_engine, d)
    assert used.tag == "fallback"
    assert isinstance(used.reason, UnknownRelation)
    assert str(used) == "fallback: UnknownRelation"
    segments = sorted(set(tpch_engine.table("customer").column_values(4)))
    assert result.to_rows() == [(s,) for s in segments]


def test_index_overflow_falls_back():
    e = Engine(EngineConfig(narrow_index_limit=255))
    rows = [(i % 7, "r%d" % i, i) for i in range(300)]
    e.load_table(table("big", [("a", INT64), ("s", STRING), ("d", DECIMAL(12, 2))], rows))
    e.load_table(table("small", [("a", INT64)], [(i,) for i in range(7)]))
    d = doc(node("hash_join", read("small", [0]), read("big", [0, 1]), keys=[[0, 0]]))
    got, used = run_with_fallback(e, d)
    assert isinstance(used.reason, IndexOverflow)
    wide = Engine()
    for t in e.tables().values():
        wide.load_table(t)
    expected, _ = wide.run_native(d)
    assert got.num_rows == 300
    assert first_difference(got.to_rows(), expected.to_rows(), ordered=False) is None


def test_processing_exhaustion_falls_back(tpch, tpch_engine):
    e = Engine(EngineConfig(caching_bytes=64 * MiB, processing_bytes=MiB))
    for t in tpch.values():
        e.load_table(t)
    d = queries.load("q3")
    got, used = run_with_fallback(e, d)
    assert isinstance(used.reason, ProcessingExhausted)
    expected, _ = tpch_engine.run_native(d)
    assert first_difference(got.to_rows(), expected.to_rows(), ordered=True) is None


def test_fallback_triggers_are_exactly_the_recoverable_set():
    from siriette.errors import FALLBACK_TRIGGERS

    assert set(FALLBACK_TRIGGERS) == {UnknownRelation, UnsupportedFeature, IndexOverflow, ProcessingExhausted, CacheFull}


def test_user_errors_propagate(eng):
    from siriette.errors import MissingTable

    with pytest.raises(MissingTable):
        run_with_fallback(eng, doc(read("nope", [0])))
