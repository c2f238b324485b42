"""Node daemons and the coordinator that drives them over sockets.

Control messages are JSON objects with a 4-byte length prefix, carried on
the same listener as exchange frames:

    LOAD    {table, schema, batches: [base64 serialized batch], replace}
    PREP    {query_id, plan, placement, peers, fragments, workers, timeout}
    START   {query_id}
    CANCEL  {query_id}   also releases a finished query's state
    STATUS  {query_id?}  doubles as the heartbeat ping
    JOIN    {node, address}   daemon -> coordinator, once at startup

Replies carry ``ok``; failures name the error class and message.
"""
from __future__ import annotations

import base64
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .. import errors
from ..columnar import Table, deserialize_batch, serialize_batch
from ..config import EngineConfig
from ..dtypes import Schema
from ..engine import Engine
from ..errors import CoordinatorUnreachable, EngineError, NoAliveNodes, NodeLost, TransportError
from ..exchange import ExchangeService, SocketTransport
from ..exchange.transport import control_request
from ..executor import Profiler
from ..plan_ir import split_fragments
from .cluster import DONE, FAILED, PENDING, RUNNING, Coordinator, QueryExecution
from .membership import Membership
from .node import Placement, run_fragment

log = logging.getLogger(__name__)

COORDINATOR_ID = 65535
POLL_INTERVAL = 0.1


def error_reply(exc: BaseException) -> dict:
    return {"ok": False, "error": type(exc).__name__, "message": str(exc)}


def remote_error(reply: dict) -> EngineError:
    """Rebuild the exception a peer reported, falling back to EngineError."""
    cls = getattr(errors, reply.get("error", ""), None)
    message = reply.get("message", "remote failure")
    if isinstance(cls, type) and issubclass(cls, EngineError):
        try:
            return cls(message)
        except TypeError:
            pass
    return EngineError(f"{reply.get('error')}: {message}")


def encode_table(table: Table) -> dict:
    return {
        "table": table.name,
        "schema": table.schema.to_json(),
        "batches": [base64.b64encode(serialize_batch(b)).decode("ascii") for b in table.batches],
    }


def decode_table(msg: dict) -> Table:
    schema = Schema.from_json(msg["schema"])
    batches = [deserialize_batch(base64.b64decode(s)) for s in msg["batches"]]
    return Table(msg["table"], schema, batches)


@dataclass
class _NodeQuery:
    query_id: int
    fragments: object
    placement: Placement
    fids: list
    workers: int
    timeout: float
    status: dict = field(default_factory=dict)  # fragment id -> state
    error: Optional[BaseException] = None
    profiler: Profiler = field(default_factory=Profiler)
    cancelled: threading.Event = field(default_factory=threading.Event)
    threads: list = field(default_factory=list)


class NodeDaemon:
    """One data node: an engine, an exchange endpoint and the control handler."""

    def __init__(self, node_id: int, listen: tuple = ("127.0.0.1", 0), coordinator: Optional[tuple] = None,
                 config: Optional[EngineConfig] = None):
        self.node_id = node_id
        self.config = config or EngineConfig()
        self.engine = Engine(self.config)
        self.transport = SocketTransport(node_id, listen, window=self.config.exchange_window,
                                         timeout=self.config.exchange_timeout_s)
        self.service = ExchangeService(node_id, self.transport, self.engine.buffers)
        self.transport.attach(node_id, self.service.on_frame, self.handle)
        self.address = self.transport.address
        self.coordinator = coordinator
        self.queries: dict = {}
        self._lock = threading.Lock()
        self._stop = threading.Event()

    # -- lifecycle ------------------------------------------------------------

    def announce(self, attempts: int = 20, delay: float = 0.1) -> None:
        """Tell the coordinator this node exists; CoordinatorUnreachable if nobody answers."""
        if self.coordinator is None:
            return
        last: Optional[BaseException] = None
        for _ in range(attempts):
            try:
                reply = control_request(tuple(self.coordinator), {
                    "type": "JOIN", "node": self.node_id, "address": list(self.address)}, timeout=2.0)
            except TransportError as exc:
                last = exc
                time.sleep(delay)
                continue
            if not reply.get("ok"):
                raise remote_error(reply)
            return
        raise CoordinatorUnreachable(f"coordinator at {self.coordinator} is unreachable: {last}")

    def serve_forever(self) -> None:
        self.announce()
        log.info("node %d listening on %s:%d", self.node_id, *self.address)
        self._stop.wait()

    def stop(self) -> None:
        for q in list(self.queries.values()):
            q.cancelled.set()
        with self.service.registry.cond:
            self.service.registry.cond.notify_all()
        self.transport.close()
        self._stop.set()

    # -- control --------------------------------------------------------------

    def handle(self, msg: dict) -> dict:
        kind = msg.get("type")
        try:
            handler = getattr(self, f"_on_{str(kind).lower()}", None)
            if handler is None:
                raise errors.UserError(f"unknown control message {kind!r}")
            return handler(msg)
        except Exception as exc:  # noqa: BLE001 - reported to the caller
            log.debug("control %s failed: %s", kind, exc)
            return error_reply(exc)

    def _on_load(self, msg: dict) -> dict:
        table = self.engine.load_table(decode_table(msg), replace=bool(msg.get("replace", True)))
        return {"ok": True, "rows": table.num_rows, "bytes": self.engine.buffers.cached(table.name).resident_bytes}

    def _on_prep(self, msg: dict) -> dict:
        qid = int(msg["query_id"])
        fs = split_fragments(self.engine.plan(msg["plan"]))
        placement = Placement.from_json(msg["placement"])
        for k, addr in msg.get("peers", {}).items():
            if int(k) != self.node_id:
                self.transport.peers[int(k)] = tuple(addr)
        q = _NodeQuery(qid, fs, placement, [int(f) for f in msg["fragments"]], int(msg.get("workers", 1)),
                       float(msg.get("timeout", self.config.exchange_timeout_s)))
        q.status = {fid: PENDING for fid in q.fids}
        with self._lock:
            self.queries[qid] = q
        return {"ok": True}

    def _on_start(self, msg: dict) -> dict:
        q = self._query(msg)
        q.profiler.restart()
        for fid in q.fids:
            t = threading.Thread(target=self._run, args=(q, fid), daemon=True, name=f"q{q.query_id}-f{fid}")
            q.threads.append(t)
            t.start()
        return {"ok": True}

    def _run(self, q: _NodeQuery, fid: int) -> None:
        q.status[fid] = RUNNING
        try:
            run_fragment(self.engine, self.service, q.query_id, q.fragments, fid, q.placement, q.profiler,
                         q.workers, q.timeout, q.cancelled.is_set)
            q.status[fid] = DONE
        except BaseException as exc:  # noqa: BLE001 - reported through STATUS
            log.info("query %d fragment %d failed: %s", q.query_id, fid, exc)
            if q.error is None:
                q.error = exc
            q.status[fid] = FAILED
            q.cancelled.set()

    def _on_cancel(self, msg: dict) -> dict:
        qid = int(msg["query_id"])
        with self._lock:
            q = self.queries.pop(qid, None)
        if q is not None:
            q.cancelled.set()
            with self.service.registry.cond:
                self.service.registry.cond.notify_all()
            for t in q.threads:
                t.join(q.timeout)
        self.service.registry.drop_query(qid)
        return {"ok": True}

    def _on_status(self, msg: dict) -> dict:
        reply = {"ok": True, "node": self.node_id, "address": list(self.address),
                 "tables": {n: t.num_rows for n, t in self.engine.tables().items()}}
        if msg.get("query_id") is not None:
            q = self._query(msg)
            reply["fragments"] = {str(k): v for k, v in q.status.items()}
            if q.error is not None:
                reply["error"] = error_reply(q.error)
            if all(s in (DONE, FAILED) for s in q.status.values()):
                reply["profile"] = q.profiler.report().to_json()
        return reply

    def _query(self, msg: dict) -> _NodeQuery:
        qid = int(msg["query_id"])
        with self._lock:
            q = self.queries.get(qid)
        if q is None:
            raise errors.UnknownEntry(f"node {self.node_id} has no query {qid}")
        return q


class RemoteNode:
    """Coordinator-side handle for a daemon reached over the control protocol."""

    def __init__(self, node_id: int, address: tuple, cluster: "RemoteCluster"):
        self.node_id = node_id
        self.address = tuple(address)
        self.cluster = cluster

    def request(self, msg: dict, timeout: Optional[float] = None) -> dict:
        reply = control_request(self.address, msg, timeout or self.cluster.control_timeout)
        if not reply.get("ok"):
            raise remote_error(reply)
        return reply

    def ping(self) -> bool:
        try:
            self.request({"type": "STATUS"}, timeout=2.0)
            return True
        except TransportError:
            return False

    def load(self, table: Table) -> None:
        self.request(dict(encode_table(table), type="LOAD", replace=True))

    def start(self, q: QueryExecution, fids: list, workers: int, timeout: float) -> None:
        self.request({"type": "PREP", "query_id": q.query_id, "plan": q.document,
                      "placement": q.placement.to_json(), "peers": self.cluster.peer_addresses(),
                      "fragments": fids, "workers": workers, "timeout": timeout})
        self.request({"type": "START", "query_id": q.query_id})
        for fid in fids:
            q.set_status(fid, self.node_id, RUNNING)

    def status(self, query_id: int) -> dict:
        return self.request({"type": "STATUS", "query_id": query_id})

    def cancel(self, query_id: int) -> None:
        try:
            self.request({"type": "CANCEL", "query_id": query_id})
        except (TransportError, EngineError) as exc:
            log.debug("cancel on node %d: %s", self.node_id, exc)


class RemoteCluster(Coordinator):
    """Coordinator for ``siriette serve`` daemons.

    Listens as node 65535 for result streams and JOIN announcements; nodes
    can also be added directly by address.
    """

    def __init__(self, config: Optional[EngineConfig] = None, listen: tuple = ("127.0.0.1", 0),
                 heartbeat_timeout: float = 3.0, timeout: float = 60.0):
        config = config or EngineConfig()
        self.control_timeout = max(10.0, config.exchange_timeout_s)
        self.transport = SocketTransport(COORDINATOR_ID, listen, window=config.exchange_window,
                                         timeout=config.exchange_timeout_s)
        service = ExchangeService(COORDINATOR_ID, self.transport)
        self.transport.attach(COORDINATOR_ID, service.on_frame, self._on_control)
        self.address = self.transport.address
        self._joined = threading.Condition()
        self._last_poll: dict = {}
        self.node_reports: dict = {}  # query id -> node id -> profile json
        super().__init__({}, Membership(heartbeat_timeout), service, config, timeout)

    # -- membership -----------------------------------------------------------

    def add_node(self, address: tuple, node_id: Optional[int] = None) -> int:
        """Register a daemon; its id is asked from the daemon when not given."""
        address = tuple(address)
        if node_id is None:
            try:
                node_id = int(control_request(address, {"type": "STATUS"}, 5.0)["node"])
            except (TransportError, KeyError) as exc:
                raise NodeLost(f"no daemon answering at {address}: {exc}") from None
        with self._joined:
            self.nodes[node_id] = RemoteNode(node_id, address, self)
            self.membership.join(node_id, address)
            self.transport.peers[node_id] = address
            self._placed_on = None
            self._joined.notify_all()
        return node_id

    def wait_for_nodes(self, n: int, timeout: float = 30.0) -> None:
        deadline = time.monotonic() + timeout
        with self._joined:
            while len(self.nodes) < n:
                left = deadline - time.monotonic()
                if left <= 0:
                    raise NoAliveNodes(f"only {len(self.nodes)} of {n} nodes joined within {timeout}s")
                self._joined.wait(left)

    def _on_control(self, msg: dict) -> dict:
        if msg.get("type") == "JOIN":
            self.add_node(tuple(msg["address"]), int(msg["node"]))
            return {"ok": True}
        if msg.get("type") == "STATUS":
            return {"ok": True, "node": COORDINATOR_ID, "nodes": sorted(self.nodes)}
        return {"ok": False, "error": "UserError", "message": f"unexpected message {msg.get('type')!r}"}

    def peer_addresses(self) -> dict:
        peers = {str(i): list(n.address) for i, n in self.nodes.items()}
        peers[str(COORDINATOR_ID)] = list(self.address)
        return peers

    # -- query lifecycle ------------------------------------------------------

    def _poll(self, q: QueryExecution) -> None:
        for n in q.placement.all_nodes():
            try:
                st = self.nodes[n].status(q.query_id)
            except TransportError as exc:
                q.fail(NodeLost(f"node {n} stopped answering: {exc}"))
                return
            for fid, state in st.get("fragments", {}).items():
                q.set_status(int(fid), n, state)
            if "error" in st:
                q.fail(remote_error(st["error"]))
            if "profile" in st:
                self.node_reports.setdefault(q.query_id, {})[n] = st["profile"]

    def _watch(self, q: QueryExecution) -> bool:
        now = time.monotonic()
        if now - self._last_poll.get(q.query_id, 0.0) >= POLL_INTERVAL:
            self._last_poll[q.query_id] = now
            self._poll(q)
        return q.cancelled.is_set()

    def _join(self, q: QueryExecution) -> None:
        deadline = time.monotonic() + self.timeout
        while not q.terminal or len(self.node_reports.get(q.query_id, {})) < len(q.placement.all_nodes()):
            if q.error is not None or time.monotonic() > deadline:
                return
            time.sleep(POLL_INTERVAL / 2)
            self._poll(q)

    def abort(self, q: QueryExecution) -> None:
        q.cancelled.set()
        for n in q.placement.all_nodes():
            self.nodes[n].cancel(q.query_id)

    def cleanup(self, q: QueryExecution) -> None:
        super().cleanup(q)
        self._last_poll.pop(q.query_id, None)
        for n in q.placement.all_nodes():
            if self.nodes[n].ping():
                self.nodes[n].cancel(q.query_id)

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

