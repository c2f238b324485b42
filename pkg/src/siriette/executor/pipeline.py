"""Pipeline decomposition and the stateless operators pushed through it.

A pipeline is a source, a chain of streaming operators and a sink. Join
builds, aggregates and sorts are breakers: they end one pipeline in a sink
and their sealed result is the source of a later one. Operators keep no
state of their own; anything that must survive between pushes (join
tables, limit counters) lives in the ExecContext.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from ..columnar import Batch
from ..errors import UnsupportedFeature
from ..plan_ir import PhysicalPlan, PhysNode


# ---- sources -------------------------------------------------------------


@dataclass
class ScanSource:
    node: PhysNode  # Read

    def describe(self) -> str:
        return f"scan({self.node.rel.table})"


@dataclass
class ExchangeSource:
    node: PhysNode  # consumed Exchange leaf

    def describe(self) -> str:
        return f"exchange_in(#{self.node.id})"


@dataclass
class BreakerSource:
    node: PhysNode  # Aggregate or Sort whose sink result feeds this pipeline

    def describe(self) -> str:
        return f"result_of({self.node.kind}#{self.node.id})"


Source = Union[ScanSource, ExchangeSource, BreakerSource]


# ---- operators -----------------------------------------------------------


class Operator:
    node: PhysNode
    category = "other"

    def __init__(self, node: PhysNode):
        self.node = node

    @property
    def label(self) -> str:
        return f"{self.node.kind}#{self.node.id}"

    def push(self, b: Batch, ctx, task) -> list:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.label})"


def _chunked(b: Batch, size: int) -> list:
    if b.row_count == 0:
        return []
    return b.chunks(size) if b.row_count > size else [b]


class ReadOp(Operator):
    """Column projection plus the pushed-down predicate of a Read."""

    category = "filter"

    def push(self, b, ctx, task):
        rel = self.node.rel
        out = b.select(rel.columns)
        if rel.predicate is not None:
            with ctx.span(self.category, self.label):
                pred = ctx.backend.eval_expr(rel.predicate, out)
                sel = ctx.backend.filter(out, pred)
                if len(sel) != out.row_count:
                    out = out.take(sel)
                    ctx.charge_transient(out, task)
        return _chunked(out, ctx.batch_rows)


class FilterOp(Operator):
    category = "filter"

    def push(self, b, ctx, task):
        with ctx.span(self.category, self.label):
            pred = ctx.backend.eval_expr(self.node.rel.condition, b)
            sel = ctx.backend.filter(b, pred)
            out = b if len(sel) == b.row_count else b.take(sel)
        if out is not b:
            ctx.charge_transient(out, task)
        return _chunked(out, ctx.batch_rows)


class ProjectOp(Operator):
    def push(self, b, ctx, task):
        out = Batch([ctx.backend.eval_expr(e, b) for e in self.node.rel.exprs], b.row_count)
        ctx.charge_transient(out, task)
        return _chunked(out, ctx.batch_rows)


class ProbeOp(Operator):
    category = "join"

    def push(self, b, ctx, task):
        rel = self.node.rel
        table, build = ctx.join_tables[self.node.id]
        with ctx.span(self.category, self.label):
            keys = [b.columns[lk] for lk, _ in rel.keys]
            bsel, psel = ctx.backend.join_probe(table, keys, rel.join_type, ctx.narrow_limit)
            if rel.join_type in ("semi", "anti"):
                out = b.take(psel)
            else:
                out = Batch(b.take(psel).columns + build.take(bsel).columns, len(psel))
        ctx.charge_transient(out, task)
        return _chunked(out, ctx.batch_rows)


class LimitOp(Operator):
    def push(self, b, ctx, task):
        return ctx.limit_take(self.node, b, task)


class PassOp(Operator):
    """An interior Exchange when the whole plan runs on one node."""

    def push(self, b, ctx, task):
        return [b] if b.row_count else []


# ---- sinks ---------------------------------------------------------------


@dataclass
class Sink:
    kind: str  # "join_build" | "aggregate" | "sort" | "result"
    node: Optional[PhysNode] = None

    def describe(self) -> str:
        return self.kind if self.node is None else f"{self.kind}#{self.node.id}"


# ---- pipelines -----------------------------------------------------------


@dataclass
class Pipeline:
    id: int
    source: Source
    operators: list
    sink: Sink
    deps: list = field(default_factory=list)  # pipeline ids that must seal first

    def describe(self) -> str:
        chain = " -> ".join([self.source.describe()] + [op.label for op in self.operators] + [self.sink.describe()])
        return f"P{self.id}: {chain}" + (f" (after {self.deps})" if self.deps else "")


@dataclass
class PipelineDAG:
    pipelines: list
    root: PhysNode
    result_pipeline: int  # whose sink holds the final result

    def __len__(self):
        return len(self.pipelines)

    def dependents(self, pid: int) -> list:
        return [p.id for p in self.pipelines if pid in p.deps]

    def describe(self) -> str:
        return "\n".join(p.describe() for p in self.pipelines)


_OPS = {"filter": FilterOp, "project": ProjectOp, "limit": LimitOp}


def build_pipelines(plan: Union[PhysicalPlan, PhysNode], exchange_inputs: Sequence[int] = ()) -> PipelineDAG:
    """Decompose a single-fragment plan into pipelines.

    ``exchange_inputs`` lists Exchange node ids whose data arrives from other
    fragments; they become sources. Any other Exchange node is a pass-through.
    """
    root = plan.root if isinstance(plan, PhysicalPlan) else plan
    inputs = set(exchange_inputs)
    pipelines: list[Pipeline] = []

    def close(stream, sink: Sink) -> int:
        source, ops, deps = stream
        p = Pipeline(len(pipelines), source, ops, sink, sorted(set(deps)))
        pipelines.append(p)
        return p.id

    def stream(n: PhysNode):
        """(source, operators, deps) of the open pipeline producing ``n``'s output."""
        k = n.kind
        if k == "read":
            return ScanSource(n), [ReadOp(n)], []
        if k == "exchange":
            if n.id in inputs:
                return ExchangeSource(n), [], []
            src, ops, deps = stream(n.inputs[0])
            return src, ops + [PassOp(n)], deps
        if k in _OPS:
            src, ops, deps = stream(n.inputs[0])
            return src, ops + [_OPS[k](n)], deps
        if k == "hash_join":
            build_id = close(stream(n.inputs[1]), Sink("join_build", n))
            src, ops, deps = stream(n.inputs[0])
            return src, ops + [ProbeOp(n)], deps + [build_id]
        if k in ("aggregate", "sort"):
            pid = close(stream(n.inputs[0]), Sink(k, n))
            return BreakerSource(n), [], [pid]
        raise UnsupportedFeature(f"no native operator for {k}")

    top = stream(root)
    source, ops, deps = top
    if isinstance(source, BreakerSource) and not ops:
        result = deps[0]  # the breaker at the root already holds the result
    else:
        result = close(top, Sink("result"))
    return PipelineDAG(pipelines, root, result)


def chunk_batch(b: Batch, size: int) -> list:
    """Split into morsels; an empty batch still yields nothing."""
    return _chunked(b, size)


__all__ = [
    "Pipeline", "PipelineDAG", "build_pipelines", "Operator", "ReadOp", "FilterOp", "ProjectOp",
    "ProbeOp", "LimitOp", "PassOp", "Sink", "ScanSource", "ExchangeSource", "BreakerSource",
    "chunk_batch",
]
