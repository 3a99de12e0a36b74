"""Serve the file API over the framed wire protocol.

Session shape, per connection (one handle set per connection):

    client HELLO                     -> server HELLO
    CONTROL "open upm://<name>"      -> CONTROL "ok"        (device_id = name)
    REQUEST (device_id, job_id, pay) -> RESPONSE pushed in submission order
    CONTROL "flush" | "stat"         -> CONTROL reply
    CONTROL "close"                  -> CONTROL "ok"
    BYE                              -> connection closes

Job failures surface as ERROR frames with the job's id; session-level
faults use job id 0.  ERROR payloads start with the error variant name.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from collections import deque
from dataclasses import dataclass, field

from .errors import ProtocolError, Timeout, UpmError
from .fileapi import DeviceHandle, parse_device_path, upm_open
from .framing import Frame, FrameKind, FrameReader, encode_frame
from .registry import Registry


def _error_payload(e: UpmError) -> bytes:
    text = f"{e.variant} {e.detail}" if e.detail else e.variant
    return text.encode("utf-8")


@dataclass
class _OpenDevice:
    handle: DeviceHandle
    jobs: deque[int] = field(default_factory=deque)  # client job ids, FIFO
    cond: threading.Condition = field(default_factory=threading.Condition)
    submitted: int = 0
    answered: int = 0
    dead: bool = False
    pusher: threading.Thread | None = None


class _Session:
    def __init__(self, registry: Registry, sock: socket.socket):
        self._registry = registry
        self._sock = sock
        self._send_lock = threading.Lock()
        self._devices: dict[str, _OpenDevice] = {}

    def _send(self, frame: Frame) -> None:
        data = encode_frame(frame)
        with self._send_lock:
            self._sock.sendall(data)

    def _push_loop(self, name: str, device: _OpenDevice) -> None:
        try:
            while True:
                with device.cond:
                    device.cond.wait_for(lambda: device.jobs or not device.handle.is_open)
                    if not device.jobs:
                        return  # handle closed with nothing queued
                    client_job = device.jobs[0]
                try:
                    payload = device.handle.read(None)
                    reply = Frame(FrameKind.RESPONSE, client_job, name, payload)
                except Timeout:
                    continue  # backend deadline passed; the job is still pending
                except UpmError as e:
                    if e.variant == "DEVICE_CLOSED":
                        return
                    reply = Frame(FrameKind.ERROR, client_job, name, _error_payload(e))
                try:
                    self._send(reply)
                except OSError:
                    return
                with device.cond:
                    if device.jobs and device.jobs[0] == client_job:
                        device.jobs.popleft()
                    device.answered += 1
                    device.cond.notify_all()
        finally:
            with device.cond:
                device.dead = True
                device.cond.notify_all()

    def _open(self, frame: Frame, path: str) -> None:
        name, _model = parse_device_path(path)
        if name in self._devices:
            raise ProtocolError("already open")
        handle = upm_open(self._registry, path)
        device = _OpenDevice(handle)
        device.pusher = threading.Thread(
            target=self._push_loop, args=(name, device), daemon=True
        )
        self._devices[name] = device
        device.pusher.start()
        self._send(Frame(FrameKind.CONTROL, frame.job_id, name, b"ok"))

    def _close_device(self, name: str) -> None:
        device = self._devices.pop(name, None)
        if device is None:
            return
        device.handle.close()
        with device.cond:
            device.cond.notify_all()

    def _device(self, frame: Frame) -> _OpenDevice:
        device = self._devices.get(frame.device_id)
        if device is None:
            raise ProtocolError(f"device {frame.device_id!r} not open")
        return device

    def _handle_control(self, frame: Frame) -> None:
        text = frame.payload.decode("utf-8", "replace").strip()
        if text.startswith("open "):
            self._open(frame, text[5:].strip())
            return
        device = self._device(frame)
        if text == "close":
            self._close_device(frame.device_id)
            reply = b"ok"
        elif text == "flush":
            with device.cond:
                device.cond.wait_for(lambda: device.answered >= device.submitted or device.dead)
            reply = b"ok"
        elif text == "stat":
            with device.cond:
                pending = device.submitted - device.answered
                reply = f"pending={pending} submitted={device.submitted}".encode()
        else:
            raise ProtocolError(f"control {text.split(' ', 1)[0]!r}")
        self._send(Frame(FrameKind.CONTROL, frame.job_id, frame.device_id, reply))

    def _handle_request(self, frame: Frame) -> None:
        device = self._device(frame)
        with device.cond:
            device.handle.write(frame.payload)
            device.jobs.append(frame.job_id)
            device.submitted += 1
            device.cond.notify_all()

    def run(self) -> None:
        reader = FrameReader(self._sock.recv)
        try:
            hello = reader.next_frame()
            if hello is None or hello.kind is not FrameKind.HELLO:
                raise ProtocolError("hello")
            self._send(Frame(FrameKind.HELLO, payload=b"upm-serve"))
            while True:
                frame = reader.next_frame()
                if frame is None or frame.kind is FrameKind.BYE:
                    return
                try:
                    if frame.kind is FrameKind.CONTROL:
                        self._handle_control(frame)
                    elif frame.kind is FrameKind.REQUEST:
                        self._handle_request(frame)
                    else:
                        raise ProtocolError(f"kind {frame.kind.name}")
                except UpmError as e:
                    self._send(Frame(FrameKind.ERROR, frame.job_id, frame.device_id,
                                     _error_payload(e)))
        except UpmError as e:
            # Session-level protocol fault: report and drop the connection.
            try:
                self._send(Frame(FrameKind.ERROR, 0, "", _error_payload(e)))
            except OSError:
                pass
        except OSError:
            pass
        finally:
            for name in list(self._devices):
                self._close_device(name)


class UpmServer:
    """Threaded TCP server mapping frames onto file-API operations."""

    def __init__(self, registry: Registry, host: str = "127.0.0.1", port: int = 0):
        session_registry = registry

        class Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                _Session(session_registry, self.request).run()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
