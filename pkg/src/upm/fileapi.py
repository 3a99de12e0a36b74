"""File semantics over installed devices: open, write, read, control, close.

A device path has the form ``upm://<name>[?model=<id>]``.  Writes and
reads are message-oriented: one write submits one whole job, one read
returns one whole result, and reads deliver results in submission order
no matter how the backend completes them.  Reading is the only blocking
operation.

Handles on the same device share one backend instance; the instance is
released when its last handle closes.
"""

from __future__ import annotations

import itertools
import threading
from collections import deque
from typing import Optional
from urllib.parse import parse_qsl, urlsplit

from .backends import BackendInstance, start_backend
from .errors import DeviceClosed, IncompatibleModel, ProtocolError, Timeout
from .model import DeviceDescriptor
from .registry import Registry

_handle_serial = itertools.count(1)
_pool_guard = threading.Lock()


class _InstancePool:
    """Reference-counted backend instances, one pool per registry."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[BackendInstance, int]] = {}

    def acquire(self, descriptor: DeviceDescriptor) -> BackendInstance:
        with self._lock:
            entry = self._entries.get(descriptor.name)
            if entry is not None:
                instance, refs = entry
                self._entries[descriptor.name] = (instance, refs + 1)
                return instance
            instance = start_backend(descriptor)
            self._entries[descriptor.name] = (instance, 1)
            return instance

    def release(self, name: str) -> None:
        with self._lock:
            entry = self._entries.get(name)
            if entry is None:
                return
            instance, refs = entry
            if refs > 1:
                self._entries[name] = (instance, refs - 1)
                return
            del self._entries[name]
        instance.stop()


def _pool_of(registry: Registry) -> _InstancePool:
    with _pool_guard:
        pool = getattr(registry, "_instance_pool", None)
        if pool is None:
            pool = _InstancePool()
            registry._instance_pool = pool  # type: ignore[attr-defined]
        return pool


def parse_device_path(path: str) -> tuple[str, Optional[str]]:
    """Split ``upm://<name>[?model=<id>]`` into (name, model or None)."""
    parts = urlsplit(path)
    if parts.scheme != "upm" or not parts.netloc or parts.path or parts.fragment:
        raise ProtocolError(f"path {path!r}")
    model: Optional[str] = None
    for key, value in parse_qsl(parts.query, keep_blank_values=True):
        if key != "model" or model is not None:
            raise ProtocolError(f"path {path!r}")
        model = value
    return parts.netloc, model


class DeviceHandle:
    """One open session against one device; single-owner, transferable."""

    def __init__(self, registry: Registry, descriptor: DeviceDescriptor, instance: BackendInstance):
        self._registry = registry
        self.descriptor = descriptor
        self._instance = instance
        self._serial = next(_handle_serial)
        self._lock = threading.RLock()
        self._open = True
        self._next_job = 1
        self._pending: deque[int] = deque()

    def _key(self, job_id: int) -> tuple[int, int]:
        return (self._serial, job_id)

    def _check_open(self) -> None:
        if not self._open:
            raise DeviceClosed(self.descriptor.name)

    @property
    def is_open(self) -> bool:
        return self._open

    def write(self, payload: bytes) -> int:
        with self._lock:
            self._check_open()
            job_id = self._next_job
            self._instance.submit(self._key(job_id), payload)
            self._next_job += 1
            self._pending.append(job_id)
            return job_id

    def read(self, timeout: Optional[float] = None) -> bytes:
        with self._lock:
            self._check_open()
            if not self._pending:
                raise Timeout("no pending jobs")
            job_id = self._pending[0]
        try:
            result = self._instance.collect(self._key(job_id), timeout)
        except Timeout:
            raise
        except DeviceClosed:
            raise
        except Exception:
            self._consume(job_id)
            raise
        self._consume(job_id)
        return result

    def _consume(self, job_id: int) -> None:
        with self._lock:
            if self._pending and self._pending[0] == job_id:
                self._pending.popleft()

    def control(self, cmd: str) -> str:
        with self._lock:
            self._check_open()
            pending = list(self._pending)
            submitted = self._next_job - 1
        if cmd == "stat":
            return f"pending={len(pending)} submitted={submitted}"
        if cmd == "flush":
            self._instance.wait_done([self._key(j) for j in pending])
            return "ok"
        raise ProtocolError(f"control {cmd!r}")

    def close(self) -> None:
        with self._lock:
            if not self._open:
                return
            self._open = False
            pending, self._pending = list(self._pending), deque()
        for job_id in pending:
            self._instance.discard(self._key(job_id))
        _pool_of(self._registry).release(self.descriptor.name)

    def __enter__(self) -> "DeviceHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def upm_open(registry: Registry, path: str) -> DeviceHandle:
    name, model = parse_device_path(path)
    descriptor = registry.lookup(name)
    if model is not None and model != descriptor.model_id:
        raise IncompatibleModel(f"{model} != {descriptor.model_id}")
    instance = _pool_of(registry).acquire(descriptor)
    return DeviceHandle(registry, descriptor, instance)


def upm_write(handle: DeviceHandle, payload: bytes) -> int:
    return handle.write(payload)


def upm_read(handle: DeviceHandle, timeout: Optional[float] = None) -> bytes:
    return handle.read(timeout)


def upm_control(handle: DeviceHandle, cmd: str) -> str:
    return handle.control(cmd)


def upm_close(handle: DeviceHandle) -> None:
    handle.close()
