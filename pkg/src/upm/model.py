"""Shared vocabulary: device identity, transports, and capabilities.

A device ("general printer") is a compute backend installed under a name
and driven through file semantics.  All types here are immutable values.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .errors import InvalidManifest

NAME_RE = re.compile(r"^[a-z0-9_-]{1,64}$")


class DeviceClass(Enum):
    ECHO = "echo"
    MULTICORE = "multicore"
    CLUSTER = "cluster"
    EXTERNAL = "external"


class TransportKind(Enum):
    INPROC = "inproc"
    SPAWN = "spawn"
    CONNECT = "connect"


@dataclass(frozen=True)
class TransportSpec:
    kind: TransportKind
    command: tuple[str, ...] = ()    # SPAWN only
    ranks: Optional[int] = None      # SPAWN on CLUSTER devices only
    address: str = ""                # CONNECT only

    @staticmethod
    def inproc() -> "TransportSpec":
        return TransportSpec(TransportKind.INPROC)

    @staticmethod
    def spawn(command: Sequence[str] = (), ranks: Optional[int] = None) -> "TransportSpec":
        return TransportSpec(TransportKind.SPAWN, command=tuple(command), ranks=ranks)

    @staticmethod
    def connect(address: str) -> "TransportSpec":
        return TransportSpec(TransportKind.CONNECT, address=address)


@dataclass(frozen=True)
class DeviceDescriptor:
    """Identity and capabilities of one installed device.

    ``model_id`` names the resident program (a built-in kernel or the
    model a plug-in declares at handshake).  ``speed_factor`` is work
    units per time unit and only matters to the scheduler.
    """

    name: str
    device_class: DeviceClass
    model_id: str
    languages: frozenset[str] = frozenset()
    speed_factor: Fraction = Fraction(1)
    transport: TransportSpec = field(default_factory=TransportSpec.inproc)
    params: Mapping[str, str] = field(default_factory=dict)

    def param(self, key: str, default: str = "") -> str:
        return self.params.get(key, default)


def validate_descriptor(d: DeviceDescriptor) -> None:
    """Check every descriptor invariant; raise InvalidManifest naming the
    first violated rule.  Pure: same input, same outcome."""
    if not d.name or not NAME_RE.match(d.name):
        raise InvalidManifest("name")
    if not isinstance(d.device_class, DeviceClass):
        raise InvalidManifest("class")
    if not d.model_id:
        raise InvalidManifest("model_id")
    if not isinstance(d.speed_factor, Fraction) or d.speed_factor <= 0:
        raise InvalidManifest("speed_factor")
    t = d.transport
    if d.device_class is DeviceClass.CLUSTER:
        if t.kind is not TransportKind.SPAWN:
            raise InvalidManifest("transport/class")
        if t.ranks is None or t.ranks < 1:
            raise InvalidManifest("transport.ranks")
    elif d.device_class in (DeviceClass.ECHO, DeviceClass.MULTICORE):
        if t.kind is not TransportKind.INPROC:
            raise InvalidManifest("transport/class")
    else:  # EXTERNAL
        if t.kind is TransportKind.SPAWN:
            if t.ranks is not None:
                raise InvalidManifest("transport.ranks")
            if not t.command:
                raise InvalidManifest("transport.command")
        elif t.kind is TransportKind.CONNECT:
            if not t.address:
                raise InvalidManifest("transport.address")
        else:
            raise InvalidManifest("transport/class")
    for k, v in d.params.items():
        if not isinstance(k, str) or not isinstance(v, str):
            raise InvalidManifest("params")


def parse_speed(value) -> Fraction:
    """Accept JSON numbers or fraction strings like "3/2"; decimal text is
    read exactly (0.1 is one tenth, not the nearest binary double)."""
    try:
        if isinstance(value, bool):
            raise ValueError(value)
        if isinstance(value, (int, str)):
            return Fraction(value)
        if isinstance(value, float):
            return Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        pass
    raise InvalidManifest("speed_factor")
