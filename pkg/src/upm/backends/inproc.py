"""In-process backends: the inline printer and the multicore pool."""

from __future__ import annotations

import threading
from concurrent.futures import Future, ThreadPoolExecutor

from ..errors import BackendFailure, UpmError
from ..kernels import resolve_kernel
from ..model import DeviceDescriptor
from . import BackendInstance, JobKey

DEFAULT_WORKERS = 4


class InlineBackend(BackendInstance):
    """Runs the model kernel synchronously at submit time; the smallest
    conforming printer and the reference execution path."""

    def __init__(self, descriptor: DeviceDescriptor):
        super().__init__(descriptor)
        self._kernel = resolve_kernel(descriptor.model_id)

    def _submit(self, key: JobKey, payload: bytes) -> None:
        try:
            self._store.set_ok(key, self._kernel.run(payload))
        except UpmError as e:
            self._store.set_err(key, e)


class MulticoreBackend(BackendInstance):
    """Thread pool over the kernel's shard plan.

    Jobs run concurrently and may complete out of submission order; each
    job's result is combined in shard order, so output bytes never depend
    on worker count (``params["workers"]``, default 4).
    """

    def __init__(self, descriptor: DeviceDescriptor):
        super().__init__(descriptor)
        self._kernel = resolve_kernel(descriptor.model_id)
        try:
            self._workers = int(descriptor.param("workers", str(DEFAULT_WORKERS)))
        except ValueError:
            raise BackendFailure("workers") from None
        if self._workers < 1:
            raise BackendFailure("workers")
        self._pool = ThreadPoolExecutor(max_workers=self._workers)

    def _submit(self, key: JobKey, payload: bytes) -> None:
        try:
            shards = self._kernel.shard(payload, self._workers)
        except UpmError as e:
            self._store.set_err(key, e)
            return
        futures: list[Future] = [self._pool.submit(self._kernel.partial, s) for s in shards]
        remaining = [len(futures)]
        lock = threading.Lock()

        def finish(_done: Future) -> None:
            with lock:
                remaining[0] -= 1
                if remaining[0]:
                    return
            try:
                parts = [f.result() for f in futures]
                self._store.set_ok(key, self._kernel.combine(parts))
            except UpmError as e:
                self._store.set_err(key, e)
            except Exception as e:  # pool shutdown or kernel bug
                self._store.set_err(key, BackendFailure(str(e)))

        for f in futures:
            f.add_done_callback(finish)

    def _stop(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
