"""Backend instances: the executable side of every installed device.

All backends honor one contract:

    submit(key, payload)      enqueue one job (never blocks on the job)
    collect(key, timeout)     block until that job's result; take it once
    wait_done(keys, timeout)  block until results exist, without taking
    discard(key)              drop a job's result, waking blocked collects
    stop()                    release the instance; later submits fail

A timed-out collect leaves the job claimable; a successful or failed
collect consumes it.  Job keys are opaque and unique per instance
(handles compose their serial with the per-handle job id).
"""

from __future__ import annotations

import threading
from typing import Hashable, Iterable, Optional

from ..errors import BackendFailure, DeviceClosed, Timeout, UpmError
from ..model import DeviceClass, DeviceDescriptor

JobKey = Hashable


class ResultStore:
    """Completion buffer shared by backend workers and collectors."""

    def __init__(self):
        self._cond = threading.Condition()
        self._results: dict[JobKey, tuple[bool, object]] = {}
        self._discarded: set[JobKey] = set()
        self._closed = False

    def set_ok(self, key: JobKey, payload: bytes) -> None:
        self._set(key, (True, payload))

    def set_err(self, key: JobKey, error: UpmError) -> None:
        self._set(key, (False, error))

    def _set(self, key: JobKey, outcome: tuple[bool, object]) -> None:
        with self._cond:
            if key in self._discarded:
                self._discarded.discard(key)
                return
            self._results[key] = outcome
            self._cond.notify_all()

    def collect(self, key: JobKey, timeout: Optional[float] = None) -> bytes:
        with self._cond:
            ready = lambda: key in self._results or key in self._discarded or self._closed
            if timeout is None:
                while not ready():
                    self._cond.wait()
            elif not ready():
                self._cond.wait_for(ready, timeout=timeout)
            if key in self._results:
                ok, value = self._results.pop(key)
                if ok:
                    return value  # type: ignore[return-value]
                raise value  # type: ignore[misc]
            if key in self._discarded or self._closed:
                raise DeviceClosed()
            raise Timeout()

    def wait_done(self, keys: Iterable[JobKey], timeout: Optional[float] = None) -> None:
        keys = list(keys)
        with self._cond:
            done = lambda: self._closed or all(
                k in self._results or k in self._discarded for k in keys
            )
            if timeout is None:
                while not done():
                    self._cond.wait()
            elif not done():
                if not self._cond.wait_for(done, timeout=timeout):
                    raise Timeout()
            if self._closed and not all(k in self._results for k in keys):
                raise DeviceClosed()

    def discard(self, key: JobKey) -> None:
        with self._cond:
            if self._results.pop(key, None) is None:
                self._discarded.add(key)
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class BackendInstance:
    """Base class wiring the store to the uniform contract."""

    def __init__(self, descriptor: DeviceDescriptor):
        self.descriptor = descriptor
        self._store = ResultStore()
        self._closed = False
        self._lock = threading.Lock()

    def submit(self, key: JobKey, payload: bytes) -> None:
        with self._lock:
            if self._closed:
                raise DeviceClosed(self.descriptor.name)
        self._submit(key, payload)

    def _submit(self, key: JobKey, payload: bytes) -> None:
        raise NotImplementedError

    def collect(self, key: JobKey, timeout: Optional[float] = None) -> bytes:
        return self._store.collect(key, timeout)

    def wait_done(self, keys: Iterable[JobKey], timeout: Optional[float] = None) -> None:
        self._store.wait_done(keys, timeout)

    def discard(self, key: JobKey) -> None:
        self._store.discard(key)

    def stop(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
        self._stop()
        self._store.close()

    def _stop(self) -> None:
        pass


def start_backend(descriptor: DeviceDescriptor) -> BackendInstance:
    """Start (or attach) the backend a descriptor names."""
    from . import cluster, external, inproc

    if descriptor.device_class is DeviceClass.ECHO:
        return inproc.InlineBackend(descriptor)
    if descriptor.device_class is DeviceClass.MULTICORE:
        return inproc.MulticoreBackend(descriptor)
    if descriptor.device_class is DeviceClass.CLUSTER:
        return cluster.ClusterBackend(descriptor)
    if descriptor.device_class is DeviceClass.EXTERNAL:
        return external.ExternalBackend(descriptor)
    raise BackendFailure(f"class {descriptor.device_class}")
