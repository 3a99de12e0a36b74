"""Coordinator for coupled applications.

Each application runs as a script inside its own cluster device; the
coordinator owns one device handle per app and is the only party that
moves data between them.  One relay pass polls every app for at most one
outbound envelope (skipping apps whose envelope would overflow a
destination queue), then delivers at most one queued envelope to every
app.  Apps never hold connections to each other, only to their own
device router.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import appscript
from .appscript import Action, Envelope, parse_script
from .errors import BackendFailure, InvalidSpec, UpmError
from .fileapi import DeviceHandle, upm_open
from .model import DeviceClass
from .registry import Registry

DEFAULT_IO_TIMEOUT = 30.0


@dataclass(frozen=True)
class AppSpec:
    app_id: str
    device: str
    script: tuple[Action, ...]


@dataclass(frozen=True)
class CouplingTopology:
    apps: tuple[AppSpec, ...]
    buffer_bound: int


_TOPOLOGY_KEYS = {"apps", "buffer_bound"}
_APP_KEYS = {"app_id", "device", "script"}


def parse_topology(obj) -> CouplingTopology:
    if not isinstance(obj, dict) or not set(obj) <= _TOPOLOGY_KEYS:
        raise InvalidSpec("topology fields")
    bound = obj.get("buffer_bound", 4)
    if not isinstance(bound, int) or isinstance(bound, bool) or bound < 1:
        raise InvalidSpec("buffer_bound")
    apps_obj = obj.get("apps")
    if not isinstance(apps_obj, list) or not apps_obj:
        raise InvalidSpec("apps")
    apps = []
    for entry in apps_obj:
        if not isinstance(entry, dict) or set(entry) != _APP_KEYS:
            raise InvalidSpec("app fields")
        app_id, device = entry["app_id"], entry["device"]
        if not isinstance(app_id, str) or not app_id:
            raise InvalidSpec("app_id")
        if not isinstance(device, str) or not device:
            raise InvalidSpec("device")
        apps.append(AppSpec(app_id, device, parse_script(entry["script"])))
    return CouplingTopology(tuple(apps), bound)


def validate_topology(registry: Registry, t: CouplingTopology) -> None:
    ids = [a.app_id for a in t.apps]
    if len(set(ids)) != len(ids):
        raise InvalidSpec("app_id")
    known = set(ids)
    for app in t.apps:
        descriptor = registry.lookup(app.device)  # NotInstalled propagates
        if descriptor.device_class is not DeviceClass.CLUSTER:
            raise InvalidSpec("class")
        if descriptor.model_id != appscript.APPSCRIPT_MODEL:
            raise InvalidSpec("model")
        for action in app.script:
            if action.op in ("send", "recv") and action.peer not in known:
                raise InvalidSpec(f"app {action.peer!r}")


@dataclass
class QuiescenceReport:
    state: str  # QUIESCENT | STALLED | FAILED
    steps: int
    channel_counts: dict[tuple[str, str, str], int]
    failed_app: Optional[str] = None

    def render_lines(self) -> list[str]:
        lines = [
            f"channel {src} {dst} {tag} {count}"
            for (src, dst, tag), count in sorted(self.channel_counts.items())
        ]
        lines.append(f"state={self.state}")
        return lines


@dataclass
class _AppState:
    spec: AppSpec
    handle: DeviceHandle
    halted: bool = False
    outbound: int = 0
    queue: deque[Envelope] = field(default_factory=deque)


class Coordinator:
    def __init__(self, registry: Registry, topology: CouplingTopology,
                 io_timeout: float = DEFAULT_IO_TIMEOUT):
        validate_topology(registry, topology)
        self.topology = topology
        self.state = "RUNNING"
        self.failed_app: Optional[str] = None
        self.channel_counts: dict[tuple[str, str, str], int] = {}
        self.delivery_log: list[Envelope] = []
        self._io_timeout = io_timeout
        self._apps: dict[str, _AppState] = {}
        try:
            for app in topology.apps:
                handle = upm_open(registry, f"upm://{app.device}")
                self._apps[app.app_id] = _AppState(app, handle)
                self._call(
                    app.app_id,
                    appscript.CMD_SCRIPT
                    + json.dumps(
                        {"app_id": app.app_id,
                         "script": [appscript.action_to_json(a) for a in app.script]}
                    ).encode("utf-8"),
                )
        except UpmError:
            self.shutdown()
            raise

    def _call(self, app_id: str, payload: bytes) -> bytes:
        state = self._apps[app_id]
        try:
            state.handle.write(payload)
            return state.handle.read(self._io_timeout)
        except UpmError as e:
            self.state = "FAILED"
            self.failed_app = app_id
            raise BackendFailure(f"app {app_id}: {e.detail or e.variant}") from e

    def _update_status(self, state: _AppState, status: dict) -> None:
        state.halted = bool(status.get("halted"))
        state.outbound = int(status.get("outbound", 0))

    def relay_step(self) -> bool:
        """One relay pass; returns whether any envelope moved."""
        if self.state != "RUNNING":
            raise BackendFailure(f"coordinator {self.state}")
        progressed = False
        bound = self.topology.buffer_bound
        for app_id, state in self._apps.items():
            full = sorted(a for a, s in self._apps.items() if len(s.queue) >= bound)
            resp = self._call(app_id, appscript.CMD_POLL + json.dumps(full).encode())
            if resp[:1] == b"E":
                env = appscript.decode_envelope(resp[1:])
                self._apps[env.dst].queue.append(env)
                state.outbound = max(0, state.outbound - 1)
                progressed = True
            elif resp[:1] == b"N":
                self._update_status(state, json.loads(resp[1:].decode("utf-8")))
            else:
                self.state = "FAILED"
                self.failed_app = app_id
                raise BackendFailure(f"app {app_id}: bad poll response")
        for app_id, state in self._apps.items():
            if not state.queue:
                continue
            env = state.queue.popleft()
            self._call(app_id, appscript.CMD_DELIVER + env.encode())
            channel = (env.src, env.dst, env.tag)
            self.channel_counts[channel] = self.channel_counts.get(channel, 0) + 1
            self.delivery_log.append(env)
            progressed = True
        return progressed

    def _is_quiescent(self) -> bool:
        return all(
            s.halted and s.outbound == 0 and not s.queue for s in self._apps.values()
        )

    def run_until_quiescent(self, max_steps: int) -> QuiescenceReport:
        steps = 0
        state = "STALLED"
        while steps < max_steps:
            if self._is_quiescent():
                state = "QUIESCENT"
                break
            try:
                self.relay_step()
            except UpmError:
                state = "FAILED"
                break
            steps += 1
        else:
            if self._is_quiescent():
                state = "QUIESCENT"
        if self.state == "RUNNING":
            self.state = state
        return QuiescenceReport(
            state=self.state,
            steps=steps,
            channel_counts=dict(self.channel_counts),
            failed_app=self.failed_app,
        )

    def shutdown(self) -> None:
        for state in self._apps.values():
            state.handle.close()
        if self.state == "RUNNING":
            self.state = "SHUTDOWN"

    def __enter__(self) -> "Coordinator":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()
