"""Exchange wire frame.

Header (little-endian, 36 bytes, no padding)::

    4s  magic "SRXF"
    u16 version
    u64 query id
    u32 exchange id
    u16 producer node
    u16 partition
    u32 sequence
    u16 flags          bit 0: end of stream
    u64 payload length

followed by ``payload length`` bytes of serialized batch. An end-of-stream
frame carries no payload; its sequence number is one past the last data
frame of the stream.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from ..columnar import Batch, deserialize_batch, serialize_batch
from ..errors import TransportError

MAGIC = b"SRXF"
VERSION = 1
FLAG_EOS = 0x1
HEADER = struct.Struct("<4sHQIHHIHQ")
HEADER_SIZE = HEADER.size


@dataclass(frozen=True)
class ExchangeFrame:
    query_id: int
    exchange_id: int
    producer: int
    partition: int
    sequence: int
    flags: int = 0
    payload: bytes = b""

    @property
    def eos(self) -> bool:
        return bool(self.flags & FLAG_EOS)

    @property
    def stream(self) -> tuple:
        return (self.exchange_id, self.producer, self.partition)

    @classmethod
    def data(cls, query_id, exchange_id, producer, partition, sequence, batch: Batch) -> "ExchangeFrame":
        return cls(query_id, exchange_id, producer, partition, sequence, 0, serialize_batch(batch))

    @classmethod
    def end(cls, query_id, exchange_id, producer, partition, sequence) -> "ExchangeFrame":
        return cls(query_id, exchange_id, producer, partition, sequence, FLAG_EOS, b"")

    def batch(self) -> Optional[Batch]:
        return None if self.eos else deserialize_batch(self.payload)

    def encode(self) -> bytes:
        return HEADER.pack(
            MAGIC, VERSION, self.query_id, self.exchange_id, self.producer,
            self.partition, self.sequence, self.flags, len(self.payload),
        ) + self.payload


def decode_header(head: bytes) -> tuple:
    if len(head) != HEADER_SIZE:
        raise TransportError(f"frame header needs {HEADER_SIZE} bytes, got {len(head)}")
    magic, version, qid, xid, producer, partition, seq, flags, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise TransportError(f"bad frame magic {magic!r}")
    if version != VERSION:
        raise TransportError(f"unsupported frame version {version}")
    if flags & FLAG_EOS and length:
        raise TransportError("end-of-stream frame with a payload")
    return qid, xid, producer, partition, seq, flags, length


def decode_frame(data: bytes) -> ExchangeFrame:
    qid, xid, producer, partition, seq, flags, length = decode_header(bytes(data[:HEADER_SIZE]))
    payload = bytes(data[HEADER_SIZE:])
    if len(payload) != length:
        raise TransportError(f"frame payload is {len(payload)} bytes, header says {length}")
    return ExchangeFrame(qid, xid, producer, partition, seq, flags, payload)
