"""Installation interface: manifests in, persisted device registry out.

The registry file is a JSON array of manifests at a configurable path
(flag ``--registry``, env ``UPM_REGISTRY``, else the user config dir).
Manifest parsing is strict: unknown fields are rejected so typos in
hand-entered parameters fail loudly.
"""

from __future__ import annotations

import json
import os
import threading
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .errors import AlreadyInstalled, InvalidManifest, NotInstalled
from .model import (
    DeviceClass,
    DeviceDescriptor,
    TransportKind,
    TransportSpec,
    parse_speed,
    validate_descriptor,
)

_MANIFEST_KEYS = {"name", "class", "model_id", "languages", "speed_factor", "transport", "params"}
_TRANSPORT_KEYS = {"kind", "command", "ranks", "address"}


def default_registry_path() -> Path:
    env = os.environ.get("UPM_REGISTRY")
    if env:
        return Path(env)
    base = os.environ.get("XDG_CONFIG_HOME") or os.path.join(os.path.expanduser("~"), ".config")
    return Path(base) / "upm" / "registry.json"


def _parse_transport(obj, device_class: DeviceClass) -> TransportSpec:
    if obj is None:
        if device_class is DeviceClass.CLUSTER:
            raise InvalidManifest("transport.ranks")
        return TransportSpec.inproc()
    if not isinstance(obj, dict) or not set(obj) <= _TRANSPORT_KEYS:
        raise InvalidManifest("transport")
    kind = obj.get("kind")
    if kind == "inproc":
        if set(obj) != {"kind"}:
            raise InvalidManifest("transport")
        return TransportSpec.inproc()
    if kind == "spawn":
        command = obj.get("command", [])
        if not isinstance(command, list) or not all(isinstance(c, str) for c in command):
            raise InvalidManifest("transport.command")
        ranks = obj.get("ranks")
        if ranks is not None and (not isinstance(ranks, int) or isinstance(ranks, bool)):
            raise InvalidManifest("transport.ranks")
        if "address" in obj:
            raise InvalidManifest("transport")
        return TransportSpec.spawn(command, ranks)
    if kind == "connect":
        address = obj.get("address")
        if not isinstance(address, str) or set(obj) != {"kind", "address"}:
            raise InvalidManifest("transport.address")
        return TransportSpec.connect(address)
    raise InvalidManifest("transport.kind")


def parse_manifest(obj) -> DeviceDescriptor:
    """Parse one manifest object into a validated DeviceDescriptor."""
    if not isinstance(obj, dict):
        raise InvalidManifest("manifest")
    unknown = set(obj) - _MANIFEST_KEYS
    if unknown:
        raise InvalidManifest(f"unknown field {sorted(unknown)[0]!r}")
    name = obj.get("name")
    if not isinstance(name, str):
        raise InvalidManifest("name")
    class_name = obj.get("class")
    try:
        device_class = DeviceClass(class_name)
    except ValueError:
        raise InvalidManifest("class") from None
    model_id = obj.get("model_id")
    if not isinstance(model_id, str):
        raise InvalidManifest("model_id")
    languages = obj.get("languages", [])
    if not isinstance(languages, list) or not all(isinstance(l, str) for l in languages):
        raise InvalidManifest("languages")
    speed = parse_speed(obj.get("speed_factor", 1))
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise InvalidManifest("params")
    descriptor = DeviceDescriptor(
        name=name,
        device_class=device_class,
        model_id=model_id,
        languages=frozenset(languages),
        speed_factor=speed,
        transport=_parse_transport(obj.get("transport"), device_class),
        params=dict(params),
    )
    validate_descriptor(descriptor)
    return descriptor


def manifest_of(d: DeviceDescriptor) -> dict:
    """Inverse of parse_manifest, used for persistence."""
    speed = d.speed_factor
    transport: dict = {"kind": d.transport.kind.value}
    if d.transport.kind is TransportKind.SPAWN:
        transport["command"] = list(d.transport.command)
        if d.transport.ranks is not None:
            transport["ranks"] = d.transport.ranks
    elif d.transport.kind is TransportKind.CONNECT:
        transport["address"] = d.transport.address
    return {
        "name": d.name,
        "class": d.device_class.value,
        "model_id": d.model_id,
        "languages": sorted(d.languages),
        "speed_factor": int(speed) if speed.denominator == 1 else f"{speed.numerator}/{speed.denominator}",
        "transport": transport,
        "params": dict(d.params),
    }


class Registry:
    """Named set of installed devices, mirrored to one JSON file.

    Mutations are serialized and hit the disk before they become visible
    to lookups; a reload after any mutation reproduces the same map.
    """

    def __init__(self, storage_path: Path | str):
        self.storage_path = Path(storage_path)
        self._lock = threading.RLock()
        self._installed: dict[str, DeviceDescriptor] = {}
        if self.storage_path.exists():
            self._load()

    def _load(self) -> None:
        try:
            entries = json.loads(self.storage_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidManifest(f"registry file: {e}") from None
        if not isinstance(entries, list):
            raise InvalidManifest("registry file: expected an array")
        installed = {}
        for entry in entries:
            d = parse_manifest(entry)
            if d.name in installed:
                raise InvalidManifest(f"registry file: duplicate {d.name!r}")
            installed[d.name] = d
        self._installed = installed

    def _persist(self, installed: Mapping[str, DeviceDescriptor]) -> None:
        payload = json.dumps(
            [manifest_of(installed[name]) for name in sorted(installed)], indent=2
        )
        self.storage_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.storage_path.with_name(self.storage_path.name + ".tmp")
        tmp.write_text(payload + "\n", encoding="utf-8")
        os.replace(tmp, self.storage_path)

    def install(self, manifest) -> DeviceDescriptor:
        descriptor = parse_manifest(manifest)
        with self._lock:
            if descriptor.name in self._installed:
                raise AlreadyInstalled(descriptor.name)
            updated = dict(self._installed)
            updated[descriptor.name] = descriptor
            self._persist(updated)
            self._installed = updated
        return descriptor

    def uninstall(self, name: str) -> None:
        with self._lock:
            if name not in self._installed:
                raise NotInstalled(name)
            updated = dict(self._installed)
            del updated[name]
            self._persist(updated)
            self._installed = updated

    def lookup(self, name: str) -> DeviceDescriptor:
        with self._lock:
            try:
                return self._installed[name]
            except KeyError:
                raise NotInstalled(name) from None

    def list(self) -> list[DeviceDescriptor]:
        with self._lock:
            return [self._installed[name] for name in sorted(self._installed)]

    def __contains__(self, name: str) -> bool:
        with self._lock:
            return name in self._installed
