"""Plan-native analytical query engine with a reference executor and exchange layer."""
from .config import EngineConfig
from .engine import Engine
from .oracle import run_oracle, run_with_fallback

__version__ = "0.1.0"
__all__ = ["Engine", "EngineConfig", "run_oracle", "run_with_fallback", "__version__"]
