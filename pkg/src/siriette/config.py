"""Engine configuration: defaults, key=value files and overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .buffer_manager import DEFAULT_TOTAL_BYTES
from .columnar import DEFAULT_BATCH_ROWS, NARROW_LIMIT
from .errors import ConfigError


@dataclass
class EngineConfig:
    workers: int = 1
    batch_size_rows: int = DEFAULT_BATCH_ROWS
    groupby_strategy_override: Optional[str] = None  # "hash" | "sort"
    narrow_index_limit: int = NARROW_LIMIT
    memory_total_bytes: int = DEFAULT_TOTAL_BYTES
    caching_bytes: Optional[int] = None
    processing_bytes: Optional[int] = None
    backend: str = "vectorized"
    exchange_window: int = 8
    exchange_timeout_s: float = 30.0

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.batch_size_rows < 1:
            raise ConfigError("batch_size_rows must be at least 1")
        if self.groupby_strategy_override not in (None, "hash", "sort"):
            raise ConfigError(f"groupby_strategy_override must be hash or sort, got {self.groupby_strategy_override!r}")
        if self.narrow_index_limit < 0:
            raise ConfigError("narrow_index_limit must be non-negative")
        if self.exchange_window < 1:
            raise ConfigError("exchange_window must be at least 1")

    @property
    def region_sizes(self) -> tuple[int, int]:
        """(caching, processing) bytes: explicit sizes win over the 50/50 split."""
        half = self.memory_total_bytes // 2
        caching = self.caching_bytes if self.caching_bytes is not None else half
        processing = self.processing_bytes if self.processing_bytes is not None else self.memory_total_bytes - half
        return caching, processing

    def replace(self, **changes) -> "EngineConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(EngineConfig)}
_UNITS = {"k": 1 << 10, "kib": 1 << 10, "m": 1 << 20, "mib": 1 << 20, "g": 1 << 30, "gib": 1 << 30}


def parse_bytes(text: str) -> int:
    """Integer byte count, optionally with a binary suffix (64MiB, 1g)."""
    s = text.strip().lower()
    for suffix in sorted(_UNITS, key=len, reverse=True):
        if s.endswith(suffix):
            return int(float(s[: -len(suffix)]) * _UNITS[suffix])
    return int(s)


def _coerce(key: str, raw: Any) -> Any:
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in ("groupby_strategy_override",):
        return raw or None
    if key == "backend":
        return raw
    if key == "exchange_timeout_s":
        return float(raw)
    try:
        return parse_bytes(raw) if key.endswith("bytes") else int(raw)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {raw!r}") from None


def config_from_mapping(values: Mapping[str, Any], base: Optional[EngineConfig] = None) -> EngineConfig:
    base = base or EngineConfig()
    changes = {k: _coerce(k, v) for k, v in values.items()}
    return dataclasses.replace(base, **changes)


def load_config(path, base: Optional[EngineConfig] = None) -> EngineConfig:
    """Read ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        values[k.strip()] = v
    return config_from_mapping(values, base)
