"""Per-query fallback from the native engine to the reference executor."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from ..columnar import Table
from ..errors import FALLBACK_TRIGGERS
from .executor import oracle_execute

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineUsed:
    tag: str  # "native" | "fallback" | "oracle"
    reason: Optional[BaseException] = None

    @property
    def reason_name(self) -> str:
        return type(self.reason).__name__ if self.reason is not None else ""

    def __str__(self):
        return self.tag if self.reason is None else f"{self.tag}: {self.reason_name}"


def run_oracle(engine, document) -> Table:
    """Plan with every relation kind allowed and evaluate row by row."""
    plan = engine.plan(document, native=False)
    return oracle_execute(plan, engine.tables())


def run_with_fallback(engine, document, workers: Optional[int] = None, profile: bool = False):
    """(result, EngineUsed), trying the native engine first.

    Errors in the trigger set reroute the whole query to the reference
    executor over the same cached tables; anything else propagates. With
    ``profile`` the native run's report is left in ``engine.last_profile``.
    """
    engine.last_profile = None
    try:
        result, report = engine.run_native(document, workers, profile)
        engine.last_profile = report
        return result, EngineUsed("native")
    except FALLBACK_TRIGGERS as exc:
        log.info("falling back to reference executor: %s: %s", type(exc).__name__, exc)
        return run_oracle(engine, document), EngineUsed("fallback", exc)
