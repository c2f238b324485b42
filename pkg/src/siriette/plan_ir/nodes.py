"""Relational plan nodes, the annotated physical plan, and the catalog."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..dtypes import Schema
from ..errors import MissingTable
from .expr import Expr

JOIN_TYPES = ("inner", "left", "semi", "anti")
AGG_FUNCS = ("sum", "count", "min", "max", "avg")
PHASES = ("single", "partial", "final")
EXCHANGE_PATTERNS = ("broadcast", "shuffle", "merge", "multicast")


@dataclass(frozen=True)
class RelNode:
    kind = "?"

    @property
    def inputs(self) -> tuple:
        return ()


@dataclass(frozen=True)
class Read(RelNode):
    kind = "read"
    table: str
    columns: tuple
    predicate: Optional[Expr] = None


@dataclass(frozen=True)
class Filter(RelNode):
    kind = "filter"
    input: RelNode
    condition: Expr

    @property
    def inputs(self):
        return (self.input,)


@dataclass(frozen=True)
class Project(RelNode):
    kind = "project"
    input: RelNode
    exprs: tuple
    names: Optional[tuple] = None

    @property
    def inputs(self):
        return (self.input,)


@dataclass(frozen=True)
class HashJoin(RelNode):
    """Equi-join; the left input probes, the right input is built."""

    kind = "hash_join"
    left: RelNode
    right: RelNode
    keys: tuple  # ((left ordinal, right ordinal), ...)
    join_type: str = "inner"

    @property
    def inputs(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Measure:
    fn: str
    arg: Optional[Expr]  # None only for count(*)
    name: Optional[str] = None


@dataclass(frozen=True)
class Aggregate(RelNode):
    kind = "aggregate"
    input: RelNode
    group_keys: tuple
    measures: tuple
    phase: str = "single"

    @property
    def inputs(self):
        return (self.input,)


@dataclass(frozen=True)
class SortKey:
    ordinal: int
    descending: bool = False
    nulls_first: bool = False


@dataclass(frozen=True)
class Sort(RelNode):
    kind = "sort"
    input: RelNode
    keys: tuple

    @property
    def inputs(self):
        return (self.input,)


@dataclass(frozen=True)
class Limit(RelNode):
    kind = "limit"
    input: RelNode
    n: int

    @property
    def inputs(self):
        return (self.input,)


@dataclass(frozen=True)
class Exchange(RelNode):
    kind = "exchange"
    input: RelNode
    pattern: str
    keys: tuple = ()
    targets: tuple = ()

    @property
    def inputs(self):
        return (self.input,)


@dataclass(frozen=True)
class Distinct(RelNode):
    """Duplicate elimination. Only the reference executor implements it."""

    kind = "distinct"
    input: RelNode

    @property
    def inputs(self):
        return (self.input,)


RELATION_CLASSES = {c.kind: c for c in (Read, Filter, Project, HashJoin, Aggregate, Sort, Limit, Exchange, Distinct)}
ALL_RELATIONS = frozenset(RELATION_CLASSES)
NATIVE_RELATIONS = ALL_RELATIONS - {"distinct"}


@dataclass(frozen=True)
class PlanGraph:
    root: RelNode
    catalog_ref: str = ""


@dataclass(eq=False)
class PhysNode:
    """A plan node with its resolved schema and execution annotations."""

    id: int
    rel: RelNode
    inputs: tuple
    schema: Schema
    strategy: Optional[str] = None  # aggregate: "hash" | "sort"
    build_side: Optional[str] = None  # hash_join: always "right"

    @property
    def kind(self) -> str:
        return self.rel.kind

    @property
    def types(self):
        return self.schema.types

    def walk(self):
        """Yield nodes in post-order (inputs before parents)."""
        for i in self.inputs:
            yield from i.walk()
        yield self

    def signature(self) -> tuple:
        return (self.id, self.kind, tuple(i.id for i in self.inputs), tuple(self.schema), self.strategy, self.build_side)

    def __repr__(self):
        return f"PhysNode#{self.id}({self.kind})"


@dataclass(eq=False)
class PhysicalPlan:
    root: PhysNode
    catalog_ref: str = ""
    nodes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.nodes:
            self.nodes = list(self.root.walk())

    def node(self, node_id: int) -> PhysNode:
        return self.nodes[node_id]

    def signature(self) -> tuple:
        return tuple(n.signature() for n in self.nodes)


class Catalog:
    """Table name to schema mapping."""

    def __init__(self, tables: Optional[Mapping[str, Schema]] = None):
        self.tables: dict[str, Schema] = {}
        for name, schema in (tables or {}).items():
            self.add(name, schema)

    def add(self, name: str, schema: Schema) -> None:
        if name in self.tables:
            raise ValueError(f"table {name!r} already defined")
        names = [f.name for f in schema]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {name!r}")
        self.tables[name] = Schema(schema)

    def schema(self, name: str) -> Schema:
        try:
            return self.tables[name]
        except KeyError:
            raise MissingTable(f"table {name!r} is not in the catalog") from None

    def __contains__(self, name):
        return name in self.tables

    def to_json(self) -> dict:
        return {name: s.to_json() for name, s in self.tables.items()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Catalog":
        return cls({name: Schema.from_json(cols) for name, cols in doc.items()})
