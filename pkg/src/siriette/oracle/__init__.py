"""Reference executor and fallback orchestration."""
from .executor import oracle_execute
from .fallback import EngineUsed, run_oracle, run_with_fallback

__all__ = ["EngineUsed", "oracle_execute", "run_oracle", "run_with_fallback"]
