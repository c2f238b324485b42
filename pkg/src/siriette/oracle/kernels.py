"""Kernel backend built on the row-at-a-time semantics.

Same call signatures as the vectorized kernels, so the executor can be
re-pointed at it without changes. Slow on purpose; used to show the backend
is swappable and as a second opinion in tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..columnar import NARROW_LIMIT, Batch, Column, SelectionVector, narrow_indices
from ..columnar.column import NARROW_SENTINEL
from ..kernels import KernelBackend, register_backend
from ..plan_ir.validate import measure_output_types
from .executor import aggregate_rows, join_rows
from .rows import evaluate, sort_rows


def eval_expr(e, b: Batch) -> Column:
    rows = b.to_rows()
    return Column.from_pylist(e.dtype, [evaluate(e, r) for r in rows])


def filter(b: Batch, predicate: Column) -> SelectionVector:  # noqa: A001 - kernel name
    return SelectionVector.wide(np.array([i for i, v in enumerate(predicate.to_pylist()) if v is True], dtype=np.uint64))


@dataclass
class RowJoinTable:
    rows: list  # key tuples of the build side

    @property
    def nbytes(self) -> int:
        return 0


def join_build(keys) -> RowJoinTable:
    n = keys[0].length if keys else 0
    cols = [c.to_pylist() for c in keys]
    return RowJoinTable([tuple(c[i] for c in cols) for i in range(n)])


def join_probe(t: RowJoinTable, probe_keys, join_type: str = "inner", narrow_limit: int = NARROW_LIMIT):
    n = probe_keys[0].length if probe_keys else 0
    cols = [c.to_pylist() for c in probe_keys]
    width = len(cols)
    # tag each row with its position so the join routine reports indices
    left = [tuple(c[i] for c in cols) + (i,) for i in range(n)]
    right = [k + (j,) for j, k in enumerate(t.rows)]
    keys = [(j, j) for j in range(width)]
    out = join_rows(left, right, keys, join_type, width + 1)
    if join_type in ("semi", "anti"):
        probe = [r[width] for r in out]
        build = [NARROW_SENTINEL] * len(probe)
    else:
        probe = [r[width] for r in out]
        build = [NARROW_SENTINEL if r[-1] is None else r[-1] for r in out]
    bsel = narrow_indices(SelectionVector.wide(np.array([b if b >= 0 else 2**64 - 1 for b in build], dtype=np.uint64)), narrow_limit)
    psel = narrow_indices(SelectionVector.wide(np.array(probe, dtype=np.uint64)), narrow_limit)
    return bsel, psel


def _batch_of(types, rows) -> Batch:
    return Batch.from_rows(types, rows)


def _agg(b: Batch, key_ordinals, measures, phase: str) -> Batch:
    """Group with the reference routine (keys come out ascending, nulls last)."""
    key_types = [b.columns[k].dtype for k in key_ordinals]
    out = aggregate_rows(b.to_rows(), key_ordinals, measures, phase)
    return _batch_of(key_types + measure_output_types(measures, phase), out)


def group_by_hash(b, key_ordinals, measures, phase="single"):
    return _agg(b, key_ordinals, measures, phase)


group_by_sort = group_by_hash  # the reference grouping already emits keys in order


def reduce(b, measures, phase="single"):  # noqa: A001 - kernel name
    return _agg(b, [], measures, phase)


def limit(batches, n: int):
    taken = 0
    for b in batches:
        rows = b.to_rows()[: max(0, n - taken)]
        taken += len(rows)
        if rows:
            yield _batch_of(b.schema, rows)
        if taken >= n:
            return


def sort(b: Batch, keys) -> SelectionVector:
    rows = [r + (i,) for i, r in enumerate(b.to_rows())]
    return SelectionVector.wide(np.array([r[-1] for r in sort_rows(rows, keys)], dtype=np.uint64))


ORACLE_BACKEND = KernelBackend(
    name="oracle",
    eval_expr=eval_expr,
    filter=filter,
    join_build=join_build,
    join_probe=join_probe,
    group_by_hash=group_by_hash,
    group_by_sort=group_by_sort,
    sort=sort,
    reduce=reduce,
    limit=limit,
)


def register() -> None:
    register_backend(ORACLE_BACKEND)
