"""Task scheduling and push-based execution of a pipeline DAG."""
from __future__ import annotations

import itertools
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..buffer_manager import PROCESSING, BufferManager
from ..columnar import NARROW_LIMIT, Batch, Table, concat_batches
from ..columnar.batch import DEFAULT_BATCH_ROWS
from ..errors import Cancelled, MissingTable
from ..kernels import VECTORIZED, KernelBackend
from ..plan_ir import PhysNode, state_measures
from .pipeline import BreakerSource, ExchangeSource, Pipeline, PipelineDAG, ScanSource, chunk_batch
from .profiler import NullProfiler, Profiler

log = logging.getLogger(__name__)

# per-task kernel phase, then phase applied when the sink seals
_AGG_PHASES = {"single": ("partial", "final"), "partial": ("partial", "combine"), "final": ("combine", "final")}


@dataclass
class Task:
    pipeline: int
    seq: int  # monotone within the pipeline
    morsel: Batch
    reservations: list = field(default_factory=list)


@dataclass
class _LimitState:
    remaining: int
    turn: int = 0


class ExecContext:
    """Everything the operators need between pushes, plus resource handles."""

    def __init__(
        self,
        tables: Mapping[str, Table],
        buffers: Optional[BufferManager] = None,
        backend: KernelBackend = VECTORIZED,
        batch_rows: int = DEFAULT_BATCH_ROWS,
        narrow_limit: int = NARROW_LIMIT,
        profiler: Optional[Profiler] = None,
        exchange_inputs: Optional[Mapping[int, Table]] = None,
    ):
        self.tables = tables
        self.buffers = buffers if buffers is not None else BufferManager.split()
        self.backend = backend
        self.batch_rows = batch_rows
        self.narrow_limit = narrow_limit
        self.profiler = profiler if profiler is not None else NullProfiler()
        self.exchange_inputs = dict(exchange_inputs or {})
        self.cancelled = threading.Event()
        self.error: Optional[BaseException] = None
        self.join_tables: dict = {}
        self.results: dict = {}  # breaker node id -> sealed Batch
        self.sink_parts: dict = {}  # pipeline id -> {task seq: [batches]}
        self.limits: dict = {}
        self.events: list = []
        self.tasks_created = 0
        self.tasks_finished = 0
        self.tasks_cancelled = 0
        self._held: list = []
        self._lock = threading.Lock()
        self._limit_cond = threading.Condition()
        self._clock = itertools.count()

    # -- bookkeeping ------------------------------------------------------

    def log_event(self, kind: str, pipeline: int, seq: Optional[int] = None) -> None:
        with self._lock:
            self.events.append((next(self._clock), kind, pipeline, seq))

    def span(self, category: str, operator: str = ""):
        return self.profiler.span(category, operator)

    def table(self, name: str) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            raise MissingTable(f"table {name} is not cached") from None

    def _reserve(self, nbytes: int, owner):
        return self.buffers.try_reserve(PROCESSING, nbytes, owner)

    def charge_transient(self, b: Batch, task: Optional[Task]) -> None:
        """Account an operator output that lives until its task ends."""
        r = self._reserve(b.nbytes, owner=f"task:{task.pipeline}/{task.seq}" if task else "push")
        if r is None:
            return
        if task is None:
            r.release()
        else:
            task.reservations.append(r)

    def hold(self, nbytes: int, owner) -> None:
        """Account state that lives until the query ends (sink partials, join tables)."""
        r = self._reserve(nbytes, owner)
        if r is not None:
            with self._lock:
                self._held.append(r)

    def release_all(self) -> None:
        with self._lock:
            held, self._held = self._held, []
        for r in held:
            if not r.released:
                r.release()

    # -- limit turnstile ----------------------------------------------------

    def _limit_state(self, node: PhysNode) -> _LimitState:
        with self._lock:
            st = self.limits.get(node.id)
            if st is None:
                st = self.limits[node.id] = _LimitState(node.rel.n)
            return st

    def limit_take(self, node: PhysNode, b: Batch, task: Optional[Task]) -> list:
        """Rows of ``b`` still within the limit.

        Tasks pass the limit in sequence order, so the rows kept are the first
        n of the stream regardless of how many workers run.
        """
        st = self._limit_state(node)
        with self._limit_cond:
            if task is not None:
                self._limit_cond.wait_for(lambda: st.turn == task.seq or self.cancelled.is_set())
                self._check_cancel()
            take = min(st.remaining, b.row_count)
            st.remaining -= take
        if take == 0:
            return []
        return [b if take == b.row_count else b.slice(0, take)]

    def limit_pass(self, pipeline: Pipeline, task: Task) -> None:
        for op in pipeline.operators:
            if op.node.kind != "limit":
                continue
            st = self._limit_state(op.node)
            with self._limit_cond:
                self._limit_cond.wait_for(lambda: st.turn == task.seq or self.cancelled.is_set())
                if st.turn == task.seq:
                    st.turn += 1
                self._limit_cond.notify_all()

    def wake_waiters(self) -> None:
        with self._limit_cond:
            self._limit_cond.notify_all()

    def _check_cancel(self) -> None:
        if self.cancelled.is_set():
            raise Cancelled("query cancelled")


def push(op, b: Batch, ctx: ExecContext, task: Optional[Task] = None) -> list:
    """Push one batch through one operator; returns the batches it emits."""
    return op.push(b, ctx, task)


# ---- sources and sinks ---------------------------------------------------


def _morsels(p: Pipeline, ctx: ExecContext) -> list:
    src = p.source
    if isinstance(src, ScanSource):
        return [b for b in ctx.table(src.node.rel.table).batches if b.row_count]
    if isinstance(src, ExchangeSource):
        t = ctx.exchange_inputs[src.node.id]
        return [c for b in t.batches for c in chunk_batch(b, ctx.batch_rows)]
    if isinstance(src, BreakerSource):
        return chunk_batch(ctx.results[src.node.id], ctx.batch_rows)
    raise TypeError(src)


def _agg_kernel(ctx: ExecContext, node: PhysNode, b: Batch, keys, measures, phase: str) -> Batch:
    if node.strategy is None:
        with ctx.span("aggregation", f"aggregate#{node.id}"):
            return ctx.backend.reduce(b, measures, phase)
    fn = ctx.backend.group_by_sort if node.strategy == "sort" else ctx.backend.group_by_hash
    with ctx.span("group_by", f"aggregate#{node.id}"):
        return fn(b, keys, measures, phase)


def _finish_task_sink(p: Pipeline, task: Task, out: list, ctx: ExecContext) -> None:
    """Turn a task's sink input into its per-task partial."""
    sink = p.sink
    if sink.kind == "aggregate":
        node = sink.node
        b = concat_batches(out, node.inputs[0].types) if out else Batch.empty(node.inputs[0].types)
        if not out and node.strategy is not None:
            part = None  # an empty morsel adds no groups
        else:
            part = _agg_kernel(ctx, node, b, node.rel.group_keys, node.rel.measures, _AGG_PHASES[node.rel.phase][0])
        parts = [part] if part is not None else []
    else:
        parts = out
    for b in parts:
        ctx.hold(b.nbytes, owner=f"sink:{p.id}")
    with ctx._lock:
        ctx.sink_parts.setdefault(p.id, {})[task.seq] = parts


def _seal(p: Pipeline, ctx: ExecContext, dag: PipelineDAG) -> None:
    parts_by_task = ctx.sink_parts.pop(p.id, {})
    parts = [b for seq in sorted(parts_by_task) for b in parts_by_task[seq]]
    sink = p.sink
    node = sink.node
    if sink.kind == "join_build":
        right = node.inputs[1]
        build = concat_batches(parts, right.types) if parts else Batch.empty(right.types)
        with ctx.span("join", f"hash_join#{node.id}"):
            table = ctx.backend.join_build([build.columns[rk] for _, rk in node.rel.keys])
        ctx.hold(build.nbytes + getattr(table, "nbytes", 0), owner=f"join:{node.id}")
        ctx.join_tables[node.id] = (table, build)
    elif sink.kind == "aggregate":
        rel = node.rel
        per_task, final_phase = _AGG_PHASES[rel.phase]
        nkeys = len(rel.group_keys)
        if not parts:
            empty = Batch.empty(node.inputs[0].types)
            parts = [_agg_kernel(ctx, node, empty, rel.group_keys, rel.measures, per_task)]
        merged = concat_batches(parts, parts[0].schema)
        # per-task outputs are laid out as keys, then states in measure order
        measures = state_measures(rel.measures, nkeys)
        ctx.results[node.id] = _agg_kernel(ctx, node, merged, list(range(nkeys)), measures, final_phase)
    elif sink.kind == "sort":
        types = node.inputs[0].types
        b = concat_batches(parts, types) if parts else Batch.empty(types)
        with ctx.span("order_by", f"sort#{node.id}"):
            perm = ctx.backend.sort(b, node.rel.keys)
            b = b.take(perm)
        ctx.hold(b.nbytes, owner=f"sort:{node.id}")
        ctx.results[node.id] = b
    else:
        types = dag.root.types
        ctx.results["result"] = concat_batches(parts, types) if parts else Batch.empty(types)
    ctx.log_event("seal", p.id)


# ---- scheduler -----------------------------------------------------------


class _Scheduler:
    def __init__(self, dag: PipelineDAG, ctx: ExecContext, workers: int):
        self.dag = dag
        self.ctx = ctx
        self.workers = max(1, int(workers))
        self.cond = threading.Condition()
        self.queue: deque = deque()
        self.remaining: dict = {}  # pipeline id -> unfinished task count
        self.sealed: set = set()
        self.activated: set = set()
        self.running = 0

    # all mutation of queue/remaining/sealed happens under self.cond

    def done(self) -> bool:
        return len(self.sealed) == len(self.dag.pipelines)

    def _ready(self, p: Pipeline) -> bool:
        return p.id not in self.activated and all(d in self.sealed for d in p.deps)

    def activate_ready(self) -> None:
        """Enqueue tasks of every pipeline whose upstream sinks are sealed."""
        while True:
            with self.cond:
                if self.ctx.cancelled.is_set():
                    return
                ready = [p for p in self.dag.pipelines if self._ready(p)]
                for p in ready:
                    self.activated.add(p.id)
            if not ready:
                return
            for p in ready:
                morsels = _morsels(p, self.ctx)
                if not morsels:
                    self.ctx.log_event("activate", p.id)
                    _seal(p, self.ctx, self.dag)
                    with self.cond:
                        self.sealed.add(p.id)
                        self.cond.notify_all()
                    continue
                with self.cond:
                    self.remaining[p.id] = len(morsels)
                    for i, m in enumerate(morsels):
                        self.queue.append(Task(p.id, i, m))
                        self.ctx.tasks_created += 1
                    self.cond.notify_all()
                self.ctx.log_event("activate", p.id)

    def fail(self, exc: BaseException) -> None:
        with self.cond:
            if self.ctx.error is None:
                self.ctx.error = exc
            self.ctx.cancelled.set()
            while self.queue:
                self.queue.popleft()
                self.ctx.tasks_cancelled += 1
            self.cond.notify_all()
        self.ctx.wake_waiters()

    def run_task(self, task: Task) -> None:
        ctx = self.ctx
        p = self.dag.pipelines[task.pipeline]
        ctx.log_event("start", p.id, task.seq)
        out: list = []

        def drive(batches, i):
            for b in batches:
                ctx._check_cancel()
                if i == len(p.operators):
                    out.append(b)
                else:
                    drive(p.operators[i].push(b, ctx, task), i + 1)

        try:
            drive([task.morsel], 0)
            ctx.limit_pass(p, task)
            ctx._check_cancel()
            _finish_task_sink(p, task, out, ctx)
        finally:
            for r in task.reservations:
                r.release()
            task.reservations.clear()
        ctx.log_event("finish", p.id, task.seq)

    def worker(self) -> None:
        ctx = self.ctx
        while True:
            with self.cond:
                while not self.queue and not self.done() and not ctx.cancelled.is_set():
                    self.cond.wait()
                if ctx.cancelled.is_set():
                    if self.running == 0:
                        self.cond.notify_all()
                    return
                if not self.queue:
                    return  # all sealed
                task = self.queue.popleft()
                self.running += 1
            try:
                self.run_task(task)
            except BaseException as exc:  # noqa: BLE001 - any failure aborts the query
                with self.cond:
                    self.running -= 1
                    ctx.tasks_cancelled += 1
                if not isinstance(exc, Cancelled):
                    self.fail(exc)
                continue
            with self.cond:
                self.running -= 1
                ctx.tasks_finished += 1
                self.remaining[task.pipeline] -= 1
                last = self.remaining[task.pipeline] == 0
            if last:
                try:
                    p = self.dag.pipelines[task.pipeline]
                    _seal(p, ctx, self.dag)
                    with self.cond:
                        self.sealed.add(p.id)
                        self.cond.notify_all()
                    self.activate_ready()
                except BaseException as exc:  # noqa: BLE001
                    self.fail(exc)

    def run(self) -> None:
        try:
            self.activate_ready()
        except BaseException as exc:  # noqa: BLE001
            self.fail(exc)
        if self.workers == 1:
            self.worker()
        else:
            threads = [threading.Thread(target=self.worker, name=f"siriette-worker-{i}", daemon=True) for i in range(self.workers)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if self.ctx.error is not None:
            raise self.ctx.error


def execute(dag: PipelineDAG, ctx: ExecContext, workers: int = 1) -> Table:
    """Run every pipeline and return the root's output as a table.

    Processing-region reservations made during the run are all released
    before returning, whether the query succeeds or not.
    """
    try:
        _Scheduler(dag, ctx, workers).run()
        result_sink = dag.pipelines[dag.result_pipeline].sink
        if result_sink.kind == "result":
            batch = ctx.results["result"]
        else:
            batch = ctx.results[result_sink.node.id]
    finally:
        ctx.release_all()
    return Table.from_batch("result", dag.root.schema, batch, ctx.batch_rows)
