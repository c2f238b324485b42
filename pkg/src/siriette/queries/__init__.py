"""Bundled plan documents for the TPC-H-shaped workload."""
from __future__ import annotations

from importlib import resources

TPCH = ("q1", "q3", "q6")
DISTRIBUTED = {"q1": "q1_dist", "q3": "q3_dist", "q6": "q6_dist"}


def names() -> list:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def load(name: str) -> bytes:
    """Document bytes for a bundled plan, by name without the .json suffix."""
    path = resources.files(__name__) / f"{name}.json"
    if not path.is_file():
        raise KeyError(f"no bundled plan named {name!r}")
    return path.read_bytes()
