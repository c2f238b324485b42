"""Coordinator: dispatch of fragment sets over member nodes and result collection.

Node handles hide where a node lives. LocalNode runs fragments on threads in
this process (simulated clusters); the daemon module provides a handle that
drives a remote ``siriette serve`` process over the control protocol.
"""
from __future__ import annotations

import itertools
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from ..columnar import Table
from ..config import EngineConfig
from ..engine import Engine
from ..errors import DispatchTimeout, NoAliveNodes, NodeLost, TransportError
from ..exchange import ExchangeService, LoopbackTransport, SocketTransport
from ..executor import Profiler, ProfileReport
from ..plan_ir import Catalog, FragmentSet, parse_plan, split_fragments, validate_plan
from ..plan_ir.nodes import NATIVE_RELATIONS
from .membership import Membership
from .node import RESULT_EXCHANGE, Placement, place, receive_spec, run_fragment

log = logging.getLogger(__name__)

PENDING, RUNNING, DONE, FAILED = "pending", "running", "done", "failed"


@dataclass
class QueryExecution:
    query_id: int
    document: str
    fragments: FragmentSet
    placement: Placement
    status: dict = field(default_factory=dict)  # (fragment id, node id) -> state
    profiler: Profiler = field(default_factory=Profiler)
    error: Optional[BaseException] = None
    result: Optional[Table] = None
    started: float = 0.0
    finished: Optional[float] = None
    cancelled: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def set_status(self, fid: int, node: int, state: str) -> None:
        with self.lock:
            self.status[(fid, node)] = state

    def fail(self, exc: BaseException) -> None:
        with self.lock:
            if self.error is None:
                self.error = exc
        self.cancelled.set()

    @property
    def terminal(self) -> bool:
        with self.lock:
            states = set(self.status.values())
        return FAILED in states or states <= {DONE}


class LocalNode:
    """A simulated data node living in this process."""

    def __init__(self, node_id: int, config: EngineConfig, transport):
        self.node_id = node_id
        self.config = config
        self.engine = Engine(config)
        self.transport = transport
        self.service = ExchangeService(node_id, transport, self.engine.buffers)
        self.alive = True
        self.fragment_delay = 0.0  # test hook: pause before each fragment starts
        self._threads: list = []

    # -- data ---------------------------------------------------------------

    def load(self, table: Table) -> None:
        self.engine.load_table(table, replace=True)

    def ping(self) -> bool:
        return self.alive

    # -- queries ------------------------------------------------------------

    def start(self, q: QueryExecution, fids: list, workers: int, timeout: float) -> None:
        for fid in fids:
            t = threading.Thread(target=self._run, args=(q, fid, workers, timeout), daemon=True,
                                 name=f"node{self.node_id}-f{fid}")
            self._threads.append(t)
            t.start()

    def _check(self):
        if not self.alive:
            raise NodeLost(f"node {self.node_id} is gone")

    def _run(self, q: QueryExecution, fid: int, workers: int, timeout: float) -> None:
        q.set_status(fid, self.node_id, RUNNING)
        try:
            deadline = time.monotonic() + self.fragment_delay
            while time.monotonic() < deadline and not q.cancelled.is_set():
                self._check()
                time.sleep(0.005)
            self._check()
            run_fragment(self.engine, self.service, q.query_id, q.fragments, fid, q.placement, q.profiler,
                         workers, timeout, q.cancelled.is_set)
            self._check()
            q.set_status(fid, self.node_id, DONE)
        except BaseException as exc:  # noqa: BLE001 - reported through the execution
            if not self.alive:
                exc = NodeLost(f"node {self.node_id} lost while running fragment {fid}")
            q.set_status(fid, self.node_id, FAILED)
            q.fail(exc)

    def join(self, timeout: Optional[float] = None) -> None:
        for t in self._threads:
            t.join(timeout)
        self._threads = [t for t in self._threads if t.is_alive()]

    def cleanup(self, query_id: int) -> None:
        self.service.registry.drop_query(query_id)

    def wake(self) -> None:
        with self.service.registry.cond:
            self.service.registry.cond.notify_all()


class Coordinator:
    """Plans, places and dispatches queries over a set of node handles."""

    def __init__(self, nodes: dict, membership: Membership, service: ExchangeService,
                 config: Optional[EngineConfig] = None, timeout: float = 60.0):
        self.nodes = nodes
        self.membership = membership
        self.service = service
        self.config = config or EngineConfig()
        self.catalog = Catalog()
        self.timeout = timeout
        self.dispatch_log: list = []  # (query id, fragment id, node id)
        self._qids = itertools.count(1)
        self.tables: dict = {}  # whole base tables; nodes hold row-range slices
        self._placed_on: Optional[tuple] = None

    # -- membership and data ------------------------------------------------

    def load_table(self, table: Table) -> None:
        self.tables[table.name] = table
        if table.name not in self.catalog:
            self.catalog.add(table.name, table.schema)
        self._placed_on = None

    def heartbeat(self) -> dict:
        """One monitoring round: every responsive node beats."""
        for i, node in list(self.nodes.items()):
            if node.ping():
                self.membership.beat(i)
        return self.membership.refresh()

    # -- planning -------------------------------------------------------------

    def fragments(self, document) -> FragmentSet:
        graph = parse_plan(document, NATIVE_RELATIONS)
        plan = validate_plan(graph, self.catalog, self.config.groupby_strategy_override)
        return split_fragments(plan)

    # -- lifecycle ------------------------------------------------------------

    def dispatch(self, document, fs: Optional[FragmentSet] = None, workers: int = 1) -> QueryExecution:
        text = document.decode() if isinstance(document, bytes) else document
        fs = fs or self.fragments(text)
        alive = [n for n in self.membership.alive() if n in self.nodes]
        if not alive:
            raise NoAliveNodes("no alive nodes to dispatch to")
        self.before_dispatch(alive)
        placement = place(fs, alive, self.service.node_id)
        q = QueryExecution(next(self._qids), text, fs, placement)
        q.profiler.restart()
        q.started = time.perf_counter()
        per_node: dict = {}
        for fid, ns in placement.nodes.items():
            for n in ns:
                q.status[(fid, n)] = PENDING
                per_node.setdefault(n, []).append(fid)
                self.dispatch_log.append((q.query_id, fid, n))
        for n, fids in sorted(per_node.items()):
            try:
                self.nodes[n].start(q, fids, workers, self.timeout)
            except (TransportError, OSError) as exc:
                q.fail(NodeLost(f"node {n} unreachable at dispatch: {exc}"))
                break
        return q

    def before_dispatch(self, alive: list) -> None:
        """Slice base tables by row range over ``alive`` if membership changed."""
        if self._placed_on == tuple(alive):
            return
        k = len(alive)
        for name, table in self.tables.items():
            n = table.num_rows
            for rank, node_id in enumerate(alive):
                lo, hi = n * rank // k, n * (rank + 1) // k
                try:
                    self.nodes[node_id].load(table.slice_rows(lo, hi, name))
                except (TransportError, OSError) as exc:
                    raise NodeLost(f"node {node_id} unreachable while loading {name}: {exc}") from exc
        self._placed_on = tuple(alive)

    def _watch(self, q: QueryExecution) -> bool:
        """Polled while waiting on the result; True aborts the wait."""
        return q.cancelled.is_set()

    def collect(self, q: QueryExecution) -> Table:
        """Wait for the final stream and return the query result."""
        fs, placement = q.fragments, q.placement
        root = fs.plan.root
        try:
            if q.error is not None:
                raise q.error
            res = fs.result_exchange
            if res is not None and root.id == res.id:
                mode, keys, schema = receive_spec(fs, res.id)
                producers = placement.nodes[res.producer]
                xid = res.id
            else:
                producers = placement.nodes[fs.root_fragment.id]
                mode, keys, schema, xid = "collect", (), root.schema, RESULT_EXCHANGE
                sort_node, _ = _root_order(root)
                if sort_node is not None and len(producers) > 1:
                    mode, keys = "merge", sort_node.rel.keys
            with q.profiler.span("exchange", "collect"):
                t = self._receive(q, xid, producers, schema, mode, keys)
            self.service.deregister(q.query_id, xid, "coordinator")
            if xid == RESULT_EXCHANGE and len(producers) > 1:
                _, limit = _root_order(root)
                if limit is not None and t.num_rows > limit:
                    t = t.slice_rows(0, limit)
            self._join(q)
            if q.error is not None:
                raise q.error
            q.result = t
            return t
        except BaseException as exc:
            q.fail(exc)
            self.abort(q)
            lost = [n for n in placement.all_nodes() if not self.nodes[n].ping()]
            if lost and not isinstance(q.error, NodeLost):
                # a dead node surfaces first as its peers' transport errors
                raise NodeLost(f"node(s) {lost} lost during query {q.query_id}") from q.error
            raise q.error from None
        finally:
            q.finished = time.perf_counter()
            q.profiler.stop()
            self.cleanup(q)

    def _receive(self, q, xid, producers, schema, mode, keys) -> Table:
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                return self.service.receive(q.query_id, xid, producers, schema, mode, keys, timeout=0.05,
                                            cancelled=lambda: self._watch(q))
            except TransportError:
                if self._watch(q):
                    raise q.error if q.error is not None else TransportError("query aborted") from None
                if time.monotonic() > deadline:
                    raise DispatchTimeout(f"query {q.query_id} did not finish within {self.timeout}s") from None

    def _join(self, q: QueryExecution) -> None:
        pass

    def abort(self, q: QueryExecution) -> None:
        pass

    def cleanup(self, q: QueryExecution) -> None:
        self.service.registry.drop_query(q.query_id)

    def run(self, document, workers: int = 1) -> tuple[Table, QueryExecution]:
        q = self.dispatch(document, workers=workers)
        return self.collect(q), q

    def timing_report(self, q: QueryExecution) -> ProfileReport:
        return q.profiler.report()


def _root_order(root) -> tuple:
    """(Sort node, limit n) describing how per-node root outputs combine."""
    limit = None
    node = root
    if node.kind == "limit":
        limit = node.rel.n
        node = node.inputs[0]
    return (node if node.kind == "sort" else None), limit


class LocalCluster(Coordinator):
    """An in-process cluster of ``n`` simulated nodes.

    The coordinator shares node 0's exchange endpoint. Base tables are kept
    whole here and sliced by row range over the alive nodes; slices are
    re-cut whenever the set of alive nodes changed since the last load.
    """

    def __init__(self, n: int, config: Optional[EngineConfig] = None, transport: str = "loopback",
                 heartbeat_timeout: float = 3.0, clock=time.monotonic, timeout: float = 60.0):
        config = config or EngineConfig()
        if transport == "loopback":
            transports = [LoopbackTransport(config.exchange_window, config.exchange_timeout_s)] * n
        elif transport == "socket":
            transports = [SocketTransport(i, window=config.exchange_window, timeout=config.exchange_timeout_s) for i in range(n)]
            peers = {i: t.address for i, t in enumerate(transports)}
            for t in transports:
                t.peers = peers
        else:
            raise ValueError(f"unknown transport {transport}")
        self.transports = transports
        nodes = {i: LocalNode(i, config, transports[i]) for i in range(n)}
        membership = Membership(heartbeat_timeout, clock)
        for i in nodes:
            membership.join(i)
        super().__init__(nodes, membership, nodes[0].service, config, timeout)

    def kill(self, node_id: int) -> None:
        if node_id == self.service.node_id:
            raise ValueError("the coordinator's own node cannot be killed")
        node = self.nodes[node_id]
        node.alive = False
        self.transports[node_id].receivers.pop(node_id, None)
        for n in self.nodes.values():
            n.wake()

    def restart(self, node_id: int) -> None:
        old = self.nodes[node_id]
        self.nodes[node_id] = LocalNode(node_id, self.config, self.transports[node_id])
        old.join(1.0)
        self._placed_on = None

    def _join(self, q: QueryExecution) -> None:
        for n in q.placement.all_nodes():
            self.nodes[n].join(self.timeout)

    def abort(self, q: QueryExecution) -> None:
        q.cancelled.set()
        for n in self.nodes.values():
            n.wake()
        for n in q.placement.all_nodes():
            self.nodes[n].join(self.timeout)

    def cleanup(self, q: QueryExecution) -> None:
        super().cleanup(q)
        for n in self.nodes.values():
            n.cleanup(q.query_id)

    def frame_log(self) -> list:
        seen = []
        for t in {id(t): t for t in self.transports}.values():
            seen.extend(t.frame_log)
        return seen

    def close(self) -> None:
        for t in {id(t): t for t in self.transports}.values():
            t.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
