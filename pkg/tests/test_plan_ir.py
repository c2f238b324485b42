import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from siriette import queries
from siriette.datagen import SCHEMAS
from siriette.dtypes import DATE32, DECIMAL, FLOAT64, INT64, STRING, Field, Schema
from siriette.errors import (
    MissingTable,
    OrdinalOutOfRange,
    PlanSyntaxError,
    TypeMismatch,
    UnknownFunction,
    UnknownRelation,
)
from siriette.plan_ir import (
    Aggregate,
    Arith,
    BoolOp,
    Case,
    Cast,
    Catalog,
    ColumnRef,
    Compare,
    Exchange,
    Filter,
    HashJoin,
    Like,
    Limit,
    Literal,
    Measure,
    PlanGraph,
    Project,
    Read,
    Sort,
    SortKey,
    parse_plan,
    print_plan,
    split_fragments,
    validate_plan,
)
from siriette.plan_ir.fragments import reassemble

from helpers import col, doc, lit, node, op, read

T_SCHEMA = Schema((Field("a", INT64), Field("s", STRING), Field("f", FLOAT64)))
CATALOG = Catalog({"t": T_SCHEMA, **SCHEMAS})


def phys(d):
    return validate_plan(parse_plan(d), CATALOG)


# parse_plan

def test_minimal_read():
    g = parse_plan(doc(read("t", [0])))
    assert g.root == Read("t", (0,), None)


def test_filter_missing_child():
    with pytest.raises(PlanSyntaxError):
        parse_plan(doc(node("filter", condition=lit("BOOL", True))))


def test_malformed_json():
    with pytest.raises(PlanSyntaxError):
        parse_plan(b'{"root": ')


def test_unknown_kind_and_function():
    with pytest.raises(UnknownRelation):
        parse_plan(doc(node("window", read("t", [0]))))
    with pytest.raises(UnknownFunction):
        parse_plan(doc(node("filter", read("t", [0]), condition=op("xor", col(0), col(0)))))
    with pytest.raises(UnknownFunction):
        parse_plan(doc(node("aggregate", read("t", [0]), measures=[{"fn": "median", "arg": col(0)}])))


def test_restricted_relation_set():
    with pytest.raises(UnknownRelation):
        parse_plan(doc(node("distinct", read("t", [0]))), frozenset({"read"}))


def test_q6_is_three_nodes():
    g = parse_plan(queries.load("q6"))
    agg = g.root
    assert isinstance(agg, Aggregate)
    assert isinstance(agg.input, Filter)
    assert isinstance(agg.input.input, Read)
    assert agg.input.input.table == "lineitem"


# validate_plan

def test_filter_keeps_schema():
    p = validate_plan(parse_plan(doc(node("filter", read("t", [0]), condition=op("=", col(0), lit("INT64", 5))))),
                      Catalog({"t": Schema((Field("a", INT64),))}))
    assert p.root.kind == "filter"
    assert list(p.root.types) == [INT64]
    assert p.root.schema[0].name == "a"


def test_string_key_uses_sort_strategy():
    agg = lambda keys: doc(node("aggregate", read("t", [0, 1]), group_keys=keys,  # noqa: E731
                                measures=[{"fn": "count", "arg": None}]))
    assert phys(agg([1])).root.strategy == "sort"
    assert phys(agg([0])).root.strategy == "hash"
    assert validate_plan(parse_plan(agg([1])), CATALOG, "hash").root.strategy == "hash"


def test_compare_string_int_mismatch():
    with pytest.raises(TypeMismatch):
        phys(doc(node("filter", read("t", [0, 1]), condition=op("=", col(1), col(0)))))


def test_avg_int_is_float_and_compare_is_bool():
    p = phys(doc(node("aggregate", read("t", [0]), measures=[{"fn": "avg", "arg": col(0)}])))
    assert list(p.root.types) == [FLOAT64]
    p = phys(doc(node("project", read("t", [0]), exprs=[op("<", col(0), lit("INT64", 1))])))
    assert str(p.root.types[0]) == "BOOL"


def test_partial_avg_splits_into_sum_and_count():
    p = phys(doc(node("aggregate", read("lineitem", [8, 4]), group_keys=[0], phase="partial",
                      measures=[{"fn": "avg", "arg": col(1), "name": "q"}])))
    assert list(p.root.types) == [STRING, DECIMAL(18, 2), INT64]
    assert [f.name for f in p.root.schema] == ["l_returnflag", "q_sum", "q_count"]


def test_validation_errors():
    with pytest.raises(MissingTable):
        phys(doc(read("nope", [0])))
    with pytest.raises(OrdinalOutOfRange):
        phys(doc(read("t", [3])))
    with pytest.raises(OrdinalOutOfRange):
        phys(doc(node("filter", read("t", [0]), condition=op("=", col(2), lit("INT64", 1)))))
    with pytest.raises(PlanSyntaxError):
        phys(doc(node("exchange", read("t", [0]), pattern="merge")))


def test_validation_is_deterministic():
    for name in queries.names():
        a = phys(queries.load(name))
        b = phys(queries.load(name))
        assert a.signature() == b.signature()
        assert [n.schema for n in a.nodes] == [n.schema for n in b.nodes]


def test_node_ids_topological():
    p = phys(queries.load("q3"))
    assert [n.id for n in p.nodes] == list(range(len(p.nodes)))
    for n in p.nodes:
        assert all(i.id < n.id for i in n.inputs)


# split_fragments

def test_no_exchange_single_fragment():
    fs = split_fragments(phys(queries.load("q6")))
    assert len(fs) == 1 and not fs.edges


def test_shuffle_then_final_two_fragments():
    d = doc(node("aggregate",
                 node("exchange", read("t", [0, 2]), pattern="shuffle", keys=[0]),
                 group_keys=[0], phase="single", measures=[{"fn": "sum", "arg": col(1)}]))
    fs = split_fragments(phys(d))
    assert len(fs) == 2
    [(eid, edge)] = fs.edges.items()
    assert edge.pattern == "shuffle" and edge.producer == 0 and edge.consumer == 1


def test_two_sided_shuffle_join():
    fs = split_fragments(phys(queries.load("shuffle_join")))
    assert len(fs) == 3
    patterns = sorted(e.pattern for e in fs.edges.values() if e.consumer is not None)
    assert patterns == ["shuffle", "shuffle"]


def test_q6_distributed_graph():
    fs = split_fragments(phys(queries.load("q6_dist")))
    assert len(fs) == 2
    assert fs.result_exchange is None or fs.result_exchange.consumer is None


def test_every_exchange_is_one_edge():
    for name in queries.names():
        p = phys(queries.load(name))
        fs = split_fragments(p)
        exchanges = sorted(n.id for n in p.nodes if n.kind == "exchange")
        assert sorted(fs.edges) == exchanges
        producers = [e.producer for e in fs.edges.values()]
        for e in fs.edges.values():
            assert e.consumer is None or e.producer < e.consumer
        assert len(producers) == len(exchanges)


def test_reassembly_reproduces_graph():
    for name in queries.names():
        p = phys(queries.load(name))
        original = sorted((n.id, tuple(i.id for i in n.inputs)) for n in p.nodes)
        assert reassemble(split_fragments(p)) == original


# round trip

def test_bundled_plans_print_identity():
    for name in queries.names():
        text = queries.load(name)
        once = print_plan(parse_plan(text))
        assert print_plan(parse_plan(once)) == once
        assert parse_plan(once) == parse_plan(text)


LIT = st.one_of(
    st.builds(Literal, st.just(INT64), st.one_of(st.none(), st.integers(-2**63, 2**63 - 1))),
    st.builds(Literal, st.just(FLOAT64), st.floats(allow_nan=False, allow_infinity=False)),
    st.builds(Literal, st.just(DECIMAL(12, 2)), st.integers(-10**12 + 1, 10**12 - 1)),
    st.builds(Literal, st.just(DATE32), st.integers(-1000, 40000)),
    st.builds(Literal, st.just(STRING), st.text(max_size=8)),
)
LEAF = st.one_of(st.builds(ColumnRef, st.integers(0, 5)), LIT)


def _compound(sub):
    return st.one_of(
        st.builds(Arith, st.sampled_from("+-*/"), sub, sub),
        st.builds(Compare, st.sampled_from(["=", "<>", "<", "<=", ">", ">="]), sub, sub),
        st.builds(BoolOp, st.sampled_from(["and", "or"]), st.lists(sub, min_size=2, max_size=3).map(tuple)),
        st.builds(BoolOp, st.just("not"), st.tuples(sub)),
        st.builds(Like, sub, st.text(alphabet="ab%_", max_size=5)),
        st.builds(Case, st.lists(st.tuples(sub, sub), min_size=1, max_size=2).map(tuple), st.one_of(st.none(), sub)),
        st.builds(Cast, sub, st.sampled_from([INT64, FLOAT64, DECIMAL(10, 3), STRING])),
    )


EXPR = st.recursive(LEAF, _compound, max_leaves=6)
ORDS = st.lists(st.integers(0, 5), max_size=3).map(tuple)
READ = st.builds(Read, st.sampled_from(["t", "lineitem"]), st.lists(st.integers(0, 5), min_size=1, max_size=3).map(tuple),
                 st.one_of(st.none(), EXPR))


def _rel(sub):
    measure = st.builds(Measure, st.sampled_from(["sum", "min", "max", "avg", "count"]), EXPR,
                        st.one_of(st.none(), st.text(alphabet="xyz", min_size=1, max_size=3)))
    return st.one_of(
        st.builds(Filter, sub, EXPR),
        st.builds(Project, sub, st.lists(EXPR, min_size=1, max_size=3).map(tuple), st.none()),
        st.builds(HashJoin, sub, sub, st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=2).map(tuple),
                  st.sampled_from(["inner", "left", "semi", "anti"])),
        st.builds(Aggregate, sub, ORDS, st.lists(measure, max_size=2).map(tuple),
                  st.sampled_from(["single", "partial", "final"])),
        st.builds(Sort, sub, st.lists(st.builds(SortKey, st.integers(0, 5), st.booleans(), st.booleans()),
                                      min_size=1, max_size=2).map(tuple)),
        st.builds(Limit, sub, st.integers(0, 100)),
        st.builds(Exchange, sub, st.just("shuffle"), st.lists(st.integers(0, 3), min_size=1, max_size=2).map(tuple)),
        st.builds(Exchange, sub, st.just("broadcast")),
    )


GRAPH = st.builds(PlanGraph, st.recursive(READ, _rel, max_leaves=4), st.sampled_from(["", "tpch"]))


@given(GRAPH)
def test_print_parse_roundtrip(g):
    text = print_plan(g)
    back = parse_plan(text)
    assert back == g
    assert print_plan(back) == text
    json.loads(text)
