"""Exchange layer: wire frames, transports, temp-table registry and operators."""
from .frame import FLAG_EOS, HEADER_SIZE, MAGIC, ExchangeFrame, decode_frame
from .registry import TempTableRegistry
from .service import PATTERNS, ExchangeService, merge_runs, partition_batch, partition_of
from .transport import LoopbackTransport, SocketTransport, Transport

__all__ = [
    "FLAG_EOS", "HEADER_SIZE", "MAGIC", "PATTERNS", "ExchangeFrame", "ExchangeService", "LoopbackTransport",
    "SocketTransport", "TempTableRegistry", "Transport", "decode_frame", "merge_runs", "partition_batch",
    "partition_of",
]
