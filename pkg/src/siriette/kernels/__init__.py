"""Vectorized operator kernels and the swappable backend registry."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .aggregate import group_by_hash, group_by_sort, reduce
from .expr_eval import eval_expr, like_regex
from .hashing import fnv1a_bytes, hash_column, hash_columns
from .hashtable import HashIndex
from .join import JoinTable, filter, join_build, join_probe
from .limit import limit
from .sorting import order_codes, sort


@dataclass(frozen=True)
class KernelBackend:
    """One complete set of kernel implementations.

    Every kernel returning row indices follows the same contract: filter and
    sort return wide selection vectors, join_probe returns narrow ones.
    """

    name: str
    eval_expr: Callable
    filter: Callable
    join_build: Callable
    join_probe: Callable
    group_by_hash: Callable
    group_by_sort: Callable
    sort: Callable
    reduce: Callable
    limit: Callable


VECTORIZED = KernelBackend(
    name="vectorized",
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

_BACKENDS: dict[str, KernelBackend] = {"vectorized": VECTORIZED}


def register_backend(backend: KernelBackend) -> None:
    _BACKENDS[backend.name] = backend


def get_backend(name: str) -> KernelBackend:
    if name == "oracle" and name not in _BACKENDS:
        from ..oracle import kernels as _oracle_kernels  # registers itself

        _oracle_kernels.register()
    try:
        return _BACKENDS[name]
    except KeyError:
        from ..errors import ConfigError

        raise ConfigError(f"unknown kernel backend {name!r}; known: {sorted(_BACKENDS)}") from None


__all__ = [
    "KernelBackend",
    "VECTORIZED",
    "register_backend",
    "get_backend",
    "eval_expr",
    "like_regex",
    "filter",
    "join_build",
    "join_probe",
    "JoinTable",
    "group_by_hash",
    "group_by_sort",
    "reduce",
    "sort",
    "limit",
    "order_codes",
    "fnv1a_bytes",
    "hash_column",
    "hash_columns",
    "HashIndex",
]
