"""Host side of a cluster device: spawns rank processes and routes jobs."""

from __future__ import annotations

import socket
import subprocess
import sys
import threading

from ..errors import BackendFailure, Timeout, UpmError
from ..minimp import Router
from ..model import DeviceDescriptor
from . import BackendInstance, JobKey
from .cluster_worker import pack_job, unpack_reply

DEFAULT_HANDSHAKE_TIMEOUT = 5.0
DEFAULT_JOB_TIMEOUT = 60.0

_WORKER_MODULE = "upm.backends.cluster_worker"


class ClusterBackend(BackendInstance):
    """Runs jobs SPMD over spawned rank processes (see cluster_worker).

    Jobs execute serially on the device; rank 0 owns scatter, gather, and
    combination order, so results match the single-process kernel bytes.
    """

    def __init__(self, descriptor: DeviceDescriptor):
        super().__init__(descriptor)
        ranks = descriptor.transport.ranks or 1
        handshake = float(descriptor.param("handshake_timeout", str(DEFAULT_HANDSHAKE_TIMEOUT)))
        self._job_timeout = float(descriptor.param("job_timeout", str(DEFAULT_JOB_TIMEOUT)))
        self._inflight: dict[int, JobKey] = {}
        self._inflight_lock = threading.Lock()
        self._next_wire = 1
        self._broken: str | None = None
        self._router = Router(ranks, descriptor.name, on_worker_lost=self._worker_lost)
        host, port = self._router.address
        command = list(descriptor.transport.command) or [sys.executable, "-m", _WORKER_MODULE]
        self._procs: list[subprocess.Popen] = []
        try:
            for r in range(ranks):
                self._procs.append(
                    subprocess.Popen(
                        command
                        + [
                            "--device", descriptor.name,
                            "--rank", str(r),
                            "--size", str(ranks),
                            "--connect", f"{host}:{port}",
                        ]
                    )
                )
            try:
                self._router.accept_workers(handshake)
            except socket.timeout:
                raise Timeout("worker handshake") from None
        except Exception:
            self._kill_workers()
            self._router.stop()
            raise
        self._collector = threading.Thread(target=self._collect_loop, daemon=True)
        self._collector.start()

    def _worker_lost(self, rank: int) -> None:
        self._fail_all(f"rank {rank} lost")

    def _fail_all(self, detail: str) -> None:
        with self._inflight_lock:
            self._broken = detail
            lost, self._inflight = self._inflight, {}
        for key in lost.values():
            self._store.set_err(key, BackendFailure(detail))

    def _collect_loop(self) -> None:
        while True:
            try:
                msg = self._router.host_recv(0, "result")
            except UpmError:
                return  # router stopped or worker lost
            wire_id, ok, data = unpack_reply(msg)
            with self._inflight_lock:
                key = self._inflight.pop(wire_id, None)
            if key is None:
                continue
            if ok:
                self._store.set_ok(key, data)
            else:
                self._store.set_err(key, BackendFailure(data.decode("utf-8", "replace")))

    def _submit(self, key: JobKey, payload: bytes) -> None:
        with self._inflight_lock:
            if self._broken is not None:
                self._store.set_err(key, BackendFailure(self._broken))
                return
            wire_id = self._next_wire
            self._next_wire += 1
            self._inflight[wire_id] = key
        self._router.host_send(0, "cmd", pack_job(b"J", wire_id, self.descriptor.model_id, payload))

    def collect(self, key: JobKey, timeout: float | None = None) -> bytes:
        return self._store.collect(key, self._job_timeout if timeout is None else timeout)

    def _kill_workers(self) -> None:
        for proc in self._procs:
            if proc.poll() is None:
                proc.kill()
        for proc in self._procs:
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass

    def _stop(self) -> None:
        try:
            self._router.host_send(0, "cmd", b"S")
        except OSError:
            pass
        deadline = 2.0
        for proc in self._procs:
            try:
                proc.wait(timeout=deadline)
            except subprocess.TimeoutExpired:
                break
        self._kill_workers()
        self._router.stop()
