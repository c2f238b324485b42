"""Point-to-point frame transports.

Both implementations deliver each encoded frame to the receiving node's
``on_frame`` callback, in order per (sender, receiver) pair. Senders hold a
credit per in-flight frame and get it back when the receiver acknowledges
ingestion; running out of credit for longer than the timeout raises
BackpressureTimeout.

Socket connections start with a one-byte hello: ``D`` opens a data stream
(followed by the u16 sender id, then back-to-back frames; the receiver
answers each frame with one ``A`` byte), ``C`` a control exchange (u32
length + JSON text each way).
"""
from __future__ import annotations

import json
import logging
import socket
import struct
import threading
from typing import Callable, Optional

from ..errors import BackpressureTimeout, BindError, TransportError
from .frame import HEADER_SIZE, ExchangeFrame, decode_frame, decode_header

log = logging.getLogger(__name__)

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
ACK = b"A"


class Transport:
    """Common bookkeeping: receivers and a log of every frame sent."""

    def __init__(self, window: int = 8, timeout: float = 30.0):
        self.window = window
        self.timeout = timeout
        self.receivers: dict = {}
        self.frame_log: list = []  # (src, dst, query id, exchange id, partition, sequence, flags)
        self._log_lock = threading.Lock()

    def attach(self, node_id: int, on_frame: Callable, on_control: Optional[Callable] = None) -> None:
        self.receivers[node_id] = (on_frame, on_control)

    def _record(self, src: int, dst: int, f: ExchangeFrame) -> None:
        with self._log_lock:
            self.frame_log.append((src, dst, f.query_id, f.exchange_id, f.partition, f.sequence, f.flags))

    def send(self, src: int, dst: int, frame: ExchangeFrame) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LoopbackTransport(Transport):
    """In-process delivery; frames still go through encode/decode."""

    def send(self, src, dst, frame):
        try:
            on_frame, _ = self.receivers[dst]
        except KeyError:
            raise TransportError(f"node {dst} is not reachable") from None
        self._record(src, dst, frame)
        on_frame(decode_frame(frame.encode()))

    def control(self, dst: int, message: dict) -> dict:
        try:
            _, on_control = self.receivers[dst]
        except KeyError:
            raise TransportError(f"node {dst} is not reachable") from None
        return json.loads(json.dumps(on_control(json.loads(json.dumps(message)))))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed")
        buf += chunk
    return bytes(buf)


def send_message(sock: socket.socket, message: dict) -> None:
    body = json.dumps(message).encode()
    sock.sendall(_U32.pack(len(body)) + body)


def recv_message(sock: socket.socket) -> dict:
    (n,) = _U32.unpack(_recv_exact(sock, 4))
    return json.loads(_recv_exact(sock, n).decode())


def control_request(address: tuple, message: dict, timeout: float = 10.0) -> dict:
    """One control round trip to a listening node."""
    try:
        with socket.create_connection(address, timeout=timeout) as s:
            s.sendall(b"C")
            send_message(s, message)
            return recv_message(s)
    except (OSError, ConnectionError) as exc:
        raise TransportError(f"control request to {address} failed: {exc}") from exc


class _Peer:
    """Outbound data connection with a credit window."""

    def __init__(self, sock: socket.socket, window: int):
        self.sock = sock
        self.credits = threading.Semaphore(window)
        self.lock = threading.Lock()
        self.failed: Optional[BaseException] = None
        self.reader = threading.Thread(target=self._acks, daemon=True)
        self.reader.start()

    def _acks(self):
        try:
            while True:
                b = self.sock.recv(64)
                if not b:
                    raise ConnectionError("peer closed data connection")
                for _ in range(b.count(ACK)):
                    self.credits.release()
        except OSError as exc:  # ConnectionError included
            self.failed = exc
        # wake any sender waiting for credit
        for _ in range(1024):
            self.credits.release()


class SocketTransport(Transport):
    """TCP transport for one local node talking to named peers."""

    def __init__(self, node_id: int, listen: tuple = ("127.0.0.1", 0), peers: Optional[dict] = None,
                 window: int = 8, timeout: float = 30.0):
        super().__init__(window, timeout)
        self.node_id = node_id
        self.peers: dict = dict(peers or {})  # node id -> (host, port)
        self._out: dict = {}
        self._out_lock = threading.Lock()
        self._closing = False
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._server.bind(listen)
        except OSError as exc:
            self._server.close()
            raise BindError(f"cannot bind {listen}: {exc}") from exc
        self._server.listen(64)
        self.address = self._server.getsockname()[:2]
        self._accept_thread = threading.Thread(target=self._accept, daemon=True, name=f"transport-{node_id}")
        self._accept_thread.start()

    # -- inbound ------------------------------------------------------------

    def _accept(self):
        while not self._closing:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket):
        try:
            with conn:
                hello = _recv_exact(conn, 1)
                if hello == b"D":
                    (src,) = _U16.unpack(_recv_exact(conn, 2))
                    while True:
                        head = conn.recv(HEADER_SIZE, socket.MSG_WAITALL)
                        if not head:
                            return
                        *_, length = decode_header(head)
                        payload = _recv_exact(conn, length) if length else b""
                        # looked up per frame: a restarted node registers a new receiver
                        receiver = self.receivers.get(self.node_id)
                        if receiver is None:
                            return
                        receiver[0](decode_frame(head + payload))
                        conn.sendall(ACK)
                elif hello == b"C":
                    receiver = self.receivers.get(self.node_id)
                    if receiver is None:
                        return
                    on_control = receiver[1]
                    message = recv_message(conn)
                    try:
                        reply = on_control(message)
                    except Exception as exc:  # noqa: BLE001 - reported to the caller
                        reply = {"ok": False, "error": type(exc).__name__, "message": str(exc)}
                    send_message(conn, reply)
        except (OSError, ConnectionError, TransportError) as exc:
            if not self._closing:
                log.debug("inbound connection ended: %s", exc)

    # -- outbound -----------------------------------------------------------

    def _peer(self, dst: int) -> _Peer:
        with self._out_lock:
            p = self._out.get(dst)
            if p is not None and p.failed is None:
                return p
            try:
                addr = self.peers[dst]
            except KeyError:
                raise TransportError(f"no address for node {dst}") from None
            try:
                s = socket.create_connection(tuple(addr), timeout=self.timeout)
                s.settimeout(None)
                s.sendall(b"D" + _U16.pack(self.node_id))
            except OSError as exc:
                raise TransportError(f"cannot connect to node {dst} at {addr}: {exc}") from exc
            p = self._out[dst] = _Peer(s, self.window)
            return p

    def send(self, src, dst, frame):
        p = self._peer(dst)
        if not p.credits.acquire(timeout=self.timeout):
            raise BackpressureTimeout(f"no credit from node {dst} within {self.timeout}s")
        if p.failed is not None:
            raise TransportError(f"connection to node {dst} lost: {p.failed}")
        self._record(src, dst, frame)
        try:
            with p.lock:
                p.sock.sendall(frame.encode())
        except OSError as exc:
            p.failed = exc
            raise TransportError(f"send to node {dst} failed: {exc}") from exc

    def control(self, dst: int, message: dict) -> dict:
        try:
            addr = self.peers[dst]
        except KeyError:
            raise TransportError(f"no address for node {dst}") from None
        return control_request(tuple(addr), message, self.timeout)

    def drop_peer(self, dst: int) -> None:
        with self._out_lock:
            p = self._out.pop(dst, None)
        if p is not None:
            try:
                p.sock.close()
            except OSError:
                pass

    def close(self) -> None:
        self._closing = True
        try:
            self._server.close()
        except OSError:
            pass
        with self._out_lock:
            peers, self._out = list(self._out.values()), {}
        for p in peers:
            try:
                p.sock.shutdown(socket.SHUT_RDWR)
                p.sock.close()
            except OSError:
                pass
