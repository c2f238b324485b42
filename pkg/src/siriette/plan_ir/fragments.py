"""Cutting a physical plan into exchange-free fragments."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .nodes import PhysicalPlan, PhysNode


@dataclass
class ExchangeEdge:
    id: int  # node id of the Exchange node
    pattern: str
    producer: int
    consumer: Optional[int]  # None: the coordinator receives the stream
    node: PhysNode = field(repr=False)


@dataclass
class Fragment:
    id: int
    root: PhysNode
    inputs: tuple  # exchange ids consumed as sources
    output: Optional[int]  # exchange id fed by this fragment
    node_ids: tuple  # post-order; consumed Exchange nodes appear as leaves

    def is_leaf(self) -> bool:
        return not self.inputs


@dataclass
class FragmentSet:
    plan: PhysicalPlan
    fragments: list
    edges: dict  # exchange id -> ExchangeEdge

    def __len__(self):
        return len(self.fragments)

    @property
    def root_fragment(self) -> Fragment:
        return self.fragments[-1]

    @property
    def result_exchange(self) -> Optional[ExchangeEdge]:
        """The exchange delivering results to the coordinator, if the plan has one."""
        for e in self.edges.values():
            if e.consumer is None:
                return e
        return None

    def consumers_of(self, exchange_id: int) -> Optional[int]:
        return self.edges[exchange_id].consumer


def split_fragments(p: PhysicalPlan) -> FragmentSet:
    """One fragment per maximal Exchange-free subtree.

    Fragment ids are topologically ordered: producers precede consumers,
    and the last fragment is the one whose output reaches the coordinator.
    """
    fragments: list[Fragment] = []
    edges: dict[int, ExchangeEdge] = {}

    def build(top: PhysNode, output: Optional[int]) -> int:
        inputs: list[int] = []
        ids: list[int] = []

        def walk(n: PhysNode, is_top: bool):
            if n.kind == "exchange" and not is_top:
                pid = build(n.inputs[0], n.id)
                edges[n.id] = ExchangeEdge(n.id, n.rel.pattern, pid, None, n)
                inputs.append(n.id)
                ids.append(n.id)
                return
            for i in n.inputs:
                walk(i, False)
            ids.append(n.id)

        walk(top, True)
        fid = len(fragments)
        fragments.append(Fragment(fid, top, tuple(inputs), output, tuple(ids)))
        for x in inputs:
            edges[x].consumer = fid
        return fid

    root = p.root
    if root.kind == "exchange":
        pid = build(root.inputs[0], root.id)
        edges[root.id] = ExchangeEdge(root.id, root.rel.pattern, pid, None, root)
    else:
        build(root, None)
    return FragmentSet(p, fragments, edges)


def reassemble(fs: FragmentSet) -> list[tuple]:
    """Rebuild (node id, input ids) adjacency by inlining fragments at their edges."""
    by_id: dict[int, PhysNode] = {}
    adjacency: dict[int, tuple] = {}
    for f in fs.fragments:
        stack = [f.root]
        while stack:
            n = stack.pop()
            by_id[n.id] = n
            if n.kind == "exchange" and n.id in f.inputs:
                producer = fs.fragments[fs.edges[n.id].producer]
                adjacency[n.id] = (producer.root.id,)
                continue
            adjacency[n.id] = tuple(i.id for i in n.inputs)
            stack.extend(n.inputs)
    res = fs.result_exchange
    if res is not None and fs.plan.root.id == res.id:
        adjacency[res.id] = (fs.fragments[res.producer].root.id,)
    return sorted(adjacency.items())
