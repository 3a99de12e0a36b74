"""Minimal message-passing harness used inside cluster backends.

A cluster device runs one Router (in the backend instance) and one
Endpoint per spawned rank.  Every message travels worker -> router ->
worker, so ranks of one device can never talk to another device; each
accepted connection is recorded in a module-level log that tests inspect
to prove exactly that.

Guarantees:
  * per (src, dst, tag) FIFO delivery (TCP ordering + in-order routing);
  * barrier releases only after every rank has entered.

Rank -1 addresses the router's host side (job input, results).
"""

from __future__ import annotations

import socket
import struct
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import ProtocolError, Timeout

HOST = -1

_MSG_HELLO = 1
_MSG_DATA = 2
_MSG_BARRIER = 3
_MSG_RELEASE = 4

_HEADER = struct.Struct("<BiiHI")  # type, src, dst, tag len, payload len


@dataclass(frozen=True)
class ConnectionRecord:
    router_device: str
    worker_device: str
    rank: int


_LOG_LOCK = threading.Lock()
_CONNECTION_LOG: list[ConnectionRecord] = []


def connection_log() -> list[ConnectionRecord]:
    with _LOG_LOCK:
        return list(_CONNECTION_LOG)


def _log_connection(record: ConnectionRecord) -> None:
    with _LOG_LOCK:
        _CONNECTION_LOG.append(record)


def _pack(msg_type: int, src: int, dst: int, tag: str, payload: bytes) -> bytes:
    tag_b = tag.encode("utf-8")
    return _HEADER.pack(msg_type, src, dst, len(tag_b), len(payload)) + tag_b + payload


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _read_msg(sock: socket.socket):
    header = _read_exact(sock, _HEADER.size)
    if header is None:
        return None
    msg_type, src, dst, tag_len, pay_len = _HEADER.unpack(header)
    tag_b = _read_exact(sock, tag_len) if tag_len else b""
    payload = _read_exact(sock, pay_len) if pay_len else b""
    if (tag_len and tag_b is None) or (pay_len and payload is None):
        return None
    return msg_type, src, dst, (tag_b or b"").decode("utf-8"), payload or b""


class _Inbox:
    """FIFO queues keyed by (src, tag), with blocking pop."""

    def __init__(self):
        self._cond = threading.Condition()
        self._queues: dict[tuple[int, str], deque[bytes]] = defaultdict(deque)
        self._closed = False

    def put(self, src: int, tag: str, payload: bytes) -> None:
        with self._cond:
            self._queues[(src, tag)].append(payload)
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def pop(self, src: int, tag: str, timeout: Optional[float] = None) -> bytes:
        with self._cond:
            queue = self._queues[(src, tag)]
            if timeout is None:
                while not queue:
                    if self._closed:
                        raise ProtocolError("endpoint closed")
                    self._cond.wait()
            else:
                self._cond.wait_for(lambda: queue or self._closed, timeout=timeout)
                if not queue:
                    if self._closed:
                        raise ProtocolError("endpoint closed")
                    raise Timeout(f"recv src={src} tag={tag}")
            return queue.popleft()


class Endpoint:
    """One rank's connection to its device router."""

    def __init__(self, address: tuple[str, int], rank: int, size: int, device: str):
        self.rank = rank
        self.size = size
        self.device = device
        self._sock = socket.create_connection(address)
        self._send_lock = threading.Lock()
        self._inbox = _Inbox()
        self._releases = threading.Semaphore(0)
        self._send(_pack(_MSG_HELLO, rank, 0, device, b""))
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _send(self, data: bytes) -> None:
        with self._send_lock:
            self._sock.sendall(data)

    def _read_loop(self) -> None:
        try:
            while True:
                msg = _read_msg(self._sock)
                if msg is None:
                    break
                msg_type, src, _dst, tag, payload = msg
                if msg_type == _MSG_DATA:
                    self._inbox.put(src, tag, payload)
                elif msg_type == _MSG_RELEASE:
                    self._releases.release()
        except OSError:
            pass
        self._inbox.close()

    def mp_send(self, dst: int, tag: str, payload: bytes) -> None:
        self._send(_pack(_MSG_DATA, self.rank, dst, tag, payload))

    def mp_recv(self, src: int, tag: str, timeout: Optional[float] = None) -> bytes:
        return self._inbox.pop(src, tag, timeout)

    def mp_barrier(self) -> None:
        self._send(_pack(_MSG_BARRIER, self.rank, 0, "", b""))
        self._releases.acquire()

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class Router:
    """Hub for one device: accepts rank connections and relays messages."""

    def __init__(self, size: int, device: str, on_worker_lost: Optional[Callable[[int], None]] = None):
        self.size = size
        self.device = device
        self._on_worker_lost = on_worker_lost
        self._server = socket.create_server(("127.0.0.1", 0))
        self._socks: dict[int, socket.socket] = {}
        self._send_locks: dict[int, threading.Lock] = {}
        self._host_inbox = _Inbox()
        self._lock = threading.Lock()
        self._barrier_entered: dict[int, int] = defaultdict(int)
        self._barrier_rounds = 0
        self._stopping = False
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.getsockname()[:2]
        return host, port

    def accept_workers(self, timeout: float) -> None:
        """Accept exactly ``size`` rank connections, verifying their hello."""
        self._server.settimeout(timeout)
        for _ in range(self.size):
            sock, _addr = self._server.accept()
            msg = _read_msg(sock)
            if msg is None or msg[0] != _MSG_HELLO:
                raise ProtocolError("worker hello")
            _t, rank, _dst, worker_device, _p = msg
            if worker_device != self.device:
                raise ProtocolError(f"worker device {worker_device!r}")
            if rank in self._socks or not 0 <= rank < self.size:
                raise ProtocolError(f"worker rank {rank}")
            _log_connection(ConnectionRecord(self.device, worker_device, rank))
            self._socks[rank] = sock
            self._send_locks[rank] = threading.Lock()
        for rank, sock in self._socks.items():
            thread = threading.Thread(target=self._route_loop, args=(rank, sock), daemon=True)
            thread.start()
            self._threads.append(thread)

    def _deliver(self, dst: int, data: bytes) -> None:
        sock = self._socks.get(dst)
        if sock is None:
            return
        try:
            with self._send_locks[dst]:
                sock.sendall(data)
        except OSError:
            pass

    def _route_loop(self, rank: int, sock: socket.socket) -> None:
        try:
            while True:
                msg = _read_msg(sock)
                if msg is None:
                    break
                msg_type, src, dst, tag, payload = msg
                if msg_type == _MSG_DATA:
                    if dst == HOST:
                        self._host_inbox.put(src, tag, payload)
                    else:
                        self._deliver(dst, _pack(_MSG_DATA, src, dst, tag, payload))
                elif msg_type == _MSG_BARRIER:
                    self._barrier_enter(src)
        except OSError:
            pass
        if not self._stopping:
            self._host_inbox.close()
            if self._on_worker_lost is not None:
                self._on_worker_lost(rank)

    def _barrier_enter(self, rank: int) -> None:
        with self._lock:
            self._barrier_entered[rank] += 1
            while all(self._barrier_entered[r] > self._barrier_rounds for r in range(self.size)):
                self._barrier_rounds += 1
                release = _pack(_MSG_RELEASE, HOST, 0, "", b"")
                for r in range(self.size):
                    self._deliver(r, release)

    def host_send(self, dst: int, tag: str, payload: bytes) -> None:
        self._deliver(dst, _pack(_MSG_DATA, HOST, dst, tag, payload))

    def host_recv(self, src: int, tag: str, timeout: Optional[float] = None) -> bytes:
        return self._host_inbox.pop(src, tag, timeout)

    def stop(self) -> None:
        self._stopping = True
        self._host_inbox.close()
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        self._server.close()
