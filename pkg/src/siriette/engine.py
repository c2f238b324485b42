"""Single-node engine: cached tables plus the native execution path."""
from __future__ import annotations

import logging
import threading
from typing import Optional, Union

from .buffer_manager import BufferManager
from .columnar import Table
from .config import EngineConfig
from .errors import TableExists
from .executor import ExecContext, NullProfiler, Profiler, ProfileReport, build_pipelines, execute
from .kernels import get_backend
from .plan_ir import ALL_RELATIONS, NATIVE_RELATIONS, Catalog, PhysicalPlan, parse_plan, validate_plan

log = logging.getLogger(__name__)


class Engine:
    def __init__(self, config: Optional[EngineConfig] = None):
        self.config = config or EngineConfig()
        caching, processing = self.config.region_sizes
        self.buffers = BufferManager(caching, processing)
        self.catalog = Catalog()
        self.ingest_count = 0  # base-table ingestions performed by this engine
        self.last_profile: Optional[ProfileReport] = None
        self._lock = threading.Lock()

    # -- tables -------------------------------------------------------------

    def load_table(self, table: Table, replace: bool = False) -> Table:
        """Seal and cache ``table``; loading an existing name is rejected."""
        with self._lock:
            if table.name in self.catalog:
                if not replace:
                    raise TableExists(f"table {table.name} is already loaded")
                self.buffers.evict(table.name)
                del self.catalog.tables[table.name]
            if table.batches and max(b.row_count for b in table.batches) > self.config.batch_size_rows:
                table = table.rechunk(self.config.batch_size_rows)
            self.buffers.cache_table(table)
            self.catalog.add(table.name, table.schema)
            self.ingest_count += 1
        log.info("cached %s: %d rows, %d bytes", table.name, table.num_rows, table.nbytes)
        return table

    def tables(self) -> dict:
        out = {}
        for name in self.catalog.tables:
            entry = self.buffers.cached(name)
            if entry is not None:
                out[name] = entry.table
        return out

    def table(self, name: str) -> Table:
        return self.tables()[name]

    # -- planning -----------------------------------------------------------

    def plan(self, document: Union[bytes, str], native: bool = True) -> PhysicalPlan:
        graph = parse_plan(document, NATIVE_RELATIONS if native else ALL_RELATIONS)
        return validate_plan(graph, self.catalog, self.config.groupby_strategy_override)

    # -- execution ----------------------------------------------------------

    def context(self, profiler=None, exchange_inputs=None, backend: Optional[str] = None) -> ExecContext:
        return ExecContext(
            self.tables(),
            self.buffers,
            backend=get_backend(backend or self.config.backend),
            batch_rows=self.config.batch_size_rows,
            narrow_limit=self.config.narrow_index_limit,
            profiler=profiler,
            exchange_inputs=exchange_inputs,
        )

    def execute_plan(self, plan: PhysicalPlan, workers: Optional[int] = None, profile: bool = False,
                     backend: Optional[str] = None) -> tuple[Table, Optional[ProfileReport]]:
        profiler = Profiler() if profile else NullProfiler()
        ctx = self.context(profiler, backend=backend)
        dag = build_pipelines(plan)
        profiler.restart()
        try:
            result = execute(dag, ctx, workers or self.config.workers)
        finally:
            profiler.stop()
        return result, (profiler.report() if profile else None)

    def run_native(self, document, workers: Optional[int] = None, profile: bool = False):
        return self.execute_plan(self.plan(document), workers, profile)
