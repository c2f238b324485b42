"""Placement of fragments on nodes and execution of one fragment instance."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

from ..exchange import ExchangeService
from ..executor import build_pipelines, execute
from ..plan_ir import FragmentSet

log = logging.getLogger(__name__)

# exchange id carrying root-fragment output to the coordinator when the
# plan itself does not end in an Exchange
RESULT_EXCHANGE = 0xFFFFFFFF


@dataclass
class Placement:
    """Which nodes run each fragment, and where the coordinator listens."""

    nodes: dict  # fragment id -> list of node ids
    coordinator: int

    def to_json(self) -> dict:
        return {"nodes": {str(k): v for k, v in self.nodes.items()}, "coordinator": self.coordinator}

    @classmethod
    def from_json(cls, doc: dict) -> "Placement":
        return cls({int(k): list(v) for k, v in doc["nodes"].items()}, int(doc["coordinator"]))

    def all_nodes(self) -> list:
        return sorted({n for ns in self.nodes.values() for n in ns})


def place(fs: FragmentSet, alive: list, coordinator: int) -> Placement:
    """Every fragment runs on every alive node, except consumers of a merge
    or multicast exchange, which run only on that exchange's targets.

    Targets are ranks among the alive nodes (taken modulo their number);
    merge defaults to rank 0.
    """
    alive = sorted(alive)
    nodes = {}
    for f in fs.fragments:
        chosen = list(alive)
        for xid in f.inputs:
            rel = fs.edges[xid].node.rel
            if rel.pattern in ("merge", "multicast"):
                ranks = list(rel.targets) if rel.targets else [0]
                chosen = sorted({alive[r % len(alive)] for r in ranks})
                break
        nodes[f.id] = chosen
    return Placement(nodes, coordinator)


def output_targets(fs: FragmentSet, fid: int, placement: Placement) -> tuple:
    """(exchange id, pattern, destination nodes, keys) for a fragment's output."""
    f = fs.fragments[fid]
    if f.output is None:
        return RESULT_EXCHANGE, "broadcast", [placement.coordinator], ()
    edge = fs.edges[f.output]
    rel = edge.node.rel
    if edge.consumer is None:
        dests = [placement.coordinator]
    else:
        dests = placement.nodes[edge.consumer]
    pattern = rel.pattern
    if pattern == "merge" and len(dests) != 1:
        pattern = "broadcast"  # sorted runs to every consumer; each merges its own copy
    return f.output, pattern, dests, tuple(rel.keys)


def receive_spec(fs: FragmentSet, xid: int):
    """(mode, sort keys, schema) for receiving exchange ``xid``."""
    edge = fs.edges[xid]
    if edge.pattern == "merge":
        return "merge", edge.node.inputs[0].rel.keys, edge.node.schema
    return "collect", (), edge.node.schema


def run_fragment(engine, service: ExchangeService, query_id: int, fs: FragmentSet, fid: int,
                 placement: Placement, profiler, workers: int = 1, timeout: Optional[float] = 30.0,
                 cancelled: Optional[Callable[[], bool]] = None) -> int:
    """Receive inputs, execute, forward the output; returns rows produced."""
    frag = fs.fragments[fid]
    inputs = {}
    for xid in frag.inputs:
        mode, keys, schema = receive_spec(fs, xid)
        producers = placement.nodes[fs.edges[xid].producer]
        with profiler.span("exchange", f"receive#{xid}"):
            inputs[xid] = service.receive(query_id, xid, producers, schema, mode, keys, timeout, cancelled)
    try:
        ctx = engine.context(profiler, exchange_inputs=inputs)
        dag = build_pipelines(frag.root, frag.inputs)
        result = execute(dag, ctx, workers)
    finally:
        for xid in frag.inputs:
            service.deregister(query_id, xid, fid)
    xid, pattern, dests, keys = output_targets(fs, fid, placement)
    t0 = time.perf_counter()
    with profiler.span("exchange", f"send#{xid}"):
        service.send(query_id, xid, pattern, result.batches, dests, keys)
    log.debug("node %d fragment %d: %d rows -> %s in %.3fs", service.node_id, fid, result.num_rows, dests,
              time.perf_counter() - t0)
    return result.num_rows
