from .document import parse_expr, parse_plan, print_plan
from .expr import Arith, BoolOp, Case, Cast, ColumnRef, Compare, Expr, Like, Literal
from .fragments import ExchangeEdge, Fragment, FragmentSet, split_fragments
from .nodes import (
    ALL_RELATIONS,
    NATIVE_RELATIONS,
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
    Sort,
    SortKey,
)
from .validate import result_type, state_measures, state_types, validate_plan

__all__ = [
    "ALL_RELATIONS", "NATIVE_RELATIONS", "Aggregate", "Arith", "BoolOp", "Case", "Cast", "Catalog",
    "ColumnRef", "Compare", "Distinct", "Exchange", "ExchangeEdge", "Expr", "Filter", "Fragment",
    "FragmentSet", "HashJoin", "Like", "Limit", "Literal", "Measure", "PhysNode", "PhysicalPlan",
    "PlanGraph", "Project", "Read", "Sort", "SortKey", "parse_expr", "parse_plan", "print_plan",
    "result_type", "split_fragments", "state_measures", "state_types", "validate_plan",
]
