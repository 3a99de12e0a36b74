"""External backend: drives a plug-in process over the framed protocol.

The plug-in is either spawned on stdio pipes or reached over TCP.  It
must open with HELLO carrying its model id; after the handshake each
REQUEST is answered by a RESPONSE or ERROR with the same job id, and the
runtime says BYE on shutdown.
"""

from __future__ import annotations

import socket
import subprocess
import threading

from ..errors import BackendFailure, ProtocolError, Timeout, UpmError
from ..framing import Frame, FrameKind, FrameReader, encode_frame
from ..model import DeviceDescriptor, TransportKind
from . import BackendInstance, JobKey

DEFAULT_HANDSHAKE_TIMEOUT = 5.0
DEFAULT_JOB_TIMEOUT = 60.0


def _parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise BackendFailure(f"address {address!r}")
    return host, int(port)


class ExternalBackend(BackendInstance):
    def __init__(self, descriptor: DeviceDescriptor):
        super().__init__(descriptor)
        handshake = float(descriptor.param("handshake_timeout", str(DEFAULT_HANDSHAKE_TIMEOUT)))
        self._job_timeout = float(descriptor.param("job_timeout", str(DEFAULT_JOB_TIMEOUT)))
        self._write_lock = threading.Lock()
        self._inflight: dict[int, JobKey] = {}
        self._inflight_lock = threading.Lock()
        self._next_wire = 1
        self._broken: str | None = None
        self._proc: subprocess.Popen | None = None
        self._sock: socket.socket | None = None

        if descriptor.transport.kind is TransportKind.SPAWN:
            self._proc = subprocess.Popen(
                list(descriptor.transport.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
            self._reader = FrameReader(self._proc.stdout.read1)  # type: ignore[union-attr]
            self._write = self._proc.stdin.write  # type: ignore[union-attr]
            self._flush = self._proc.stdin.flush  # type: ignore[union-attr]
        else:
            self._sock = socket.create_connection(
                _parse_address(descriptor.transport.address), timeout=handshake
            )
            self._reader = FrameReader(self._sock.recv)
            self._write = self._sock.sendall
            self._flush = lambda: None

        self._hello_outcome: list = []
        self._hello_done = threading.Event()
        self._collector = threading.Thread(target=self._collect_loop, daemon=True)
        self._collector.start()
        if not self._hello_done.wait(handshake):
            self._teardown()
            raise Timeout("plug-in handshake")
        if self._sock is not None:
            self._sock.settimeout(None)
        outcome = self._hello_outcome[0]
        if isinstance(outcome, UpmError):
            self._teardown()
            raise outcome

    def _handshake(self) -> UpmError | None:
        try:
            frame = self._reader.next_frame()
        except UpmError as e:
            return e
        except (OSError, socket.timeout):
            return ProtocolError("hello")
        if frame is None or frame.kind is not FrameKind.HELLO:
            return ProtocolError("hello")
        if frame.payload.decode("utf-8", "replace") != self.descriptor.model_id:
            return ProtocolError("model")
        return None

    def _collect_loop(self) -> None:
        error = self._handshake()
        self._hello_outcome.append(error)
        self._hello_done.set()
        if error is not None:
            return
        detail = "plug-in exited"
        try:
            while True:
                frame = self._reader.next_frame()
                if frame is None or frame.kind is FrameKind.BYE:
                    break
                if frame.kind is FrameKind.RESPONSE:
                    self._resolve(frame.job_id, None, frame.payload)
                elif frame.kind is FrameKind.ERROR:
                    self._resolve(frame.job_id, frame.payload.decode("utf-8", "replace"), b"")
                else:
                    detail = f"unexpected {frame.kind.name} frame"
                    break
        except UpmError as e:
            detail = str(e)
        except OSError:
            pass
        self._fail_all(detail)

    def _resolve(self, wire_id: int, error: str | None, payload: bytes) -> None:
        with self._inflight_lock:
            key = self._inflight.pop(wire_id, None)
        if key is None:
            return
        if error is None:
            self._store.set_ok(key, payload)
        else:
            self._store.set_err(key, BackendFailure(error))

    def _fail_all(self, detail: str) -> None:
        with self._inflight_lock:
            self._broken = detail
            lost, self._inflight = self._inflight, {}
        for key in lost.values():
            self._store.set_err(key, BackendFailure(detail))

    def _submit(self, key: JobKey, payload: bytes) -> None:
        with self._inflight_lock:
            if self._broken is not None:
                self._store.set_err(key, BackendFailure(self._broken))
                return
            wire_id = self._next_wire
            self._next_wire += 1
            self._inflight[wire_id] = key
        frame = encode_frame(
            Frame(FrameKind.REQUEST, wire_id, self.descriptor.name, payload)
        )
        try:
            with self._write_lock:
                self._write(frame)
                self._flush()
        except OSError:
            self._fail_all("plug-in unreachable")

    def collect(self, key: JobKey, timeout: float | None = None) -> bytes:
        return self._store.collect(key, self._job_timeout if timeout is None else timeout)

    def _teardown(self) -> None:
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
        if self._proc is not None:
            for stream in (self._proc.stdin, self._proc.stdout):
                try:
                    stream.close()  # type: ignore[union-attr]
                except OSError:
                    pass
            if self._proc.poll() is None:
                try:
                    self._proc.wait(timeout=2)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                    self._proc.wait(timeout=5)

    def _stop(self) -> None:
        try:
            with self._write_lock:
                self._write(encode_frame(Frame(FrameKind.BYE)))
                self._flush()
        except (OSError, ValueError):
            pass
        self._teardown()
