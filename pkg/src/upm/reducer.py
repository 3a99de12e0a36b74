"""Classify machine descriptions and rewrite them down to Type I.

The eight-way taxonomy keys on three bits of a machine: is the CPU
multi-core, is there a cluster of them, are accelerators attached.  The
``+`` variants carry accelerators.  Reduction peels those properties off
in a fixed order, each step virtualizing what it removes into printer
descriptors:

    STRIP_ACCEL         every accelerator -> one EXTERNAL device
    SPLIT_MULTICORE     every node -> one MULTICORE device, cores become 1
    VIRTUALIZE_CLUSTER  the node set -> one CLUSTER device, nodes become 1

The residue is always a Type-I machine (one single-core CPU), so at most
three steps ever apply.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum

from .errors import InvalidSpec
from .model import DeviceClass, DeviceDescriptor, TransportSpec
from .registry import manifest_of


@dataclass(frozen=True)
class SystemSpec:
    node_count: int
    cores_per_cpu: int
    accelerators: tuple[tuple[str, int], ...] = ()  # (kind, count), order kept


class SystemType(Enum):
    I = "I"
    I_PLUS = "I+"
    II = "II"
    II_PLUS = "II+"
    III = "III"
    III_PLUS = "III+"
    IV = "IV"
    IV_PLUS = "IV+"


class Rule(Enum):
    STRIP_ACCEL = "STRIP_ACCEL"
    SPLIT_MULTICORE = "SPLIT_MULTICORE"
    VIRTUALIZE_CLUSTER = "VIRTUALIZE_CLUSTER"


@dataclass(frozen=True)
class ReductionStep:
    rule: Rule
    before: SystemType
    after: SystemType
    virtualized: tuple[DeviceDescriptor, ...]


@dataclass(frozen=True)
class UpmView:
    base: SystemSpec  # always classifies as Type I
    devices: tuple[DeviceDescriptor, ...]


_SPEC_KEYS = {"nodes", "cores_per_cpu", "accelerators"}
_ACCEL_KEYS = {"kind", "count"}


def _positive_int(value, field: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise InvalidSpec(field)
    return value


def parse_system_spec(obj) -> SystemSpec:
    if not isinstance(obj, dict) or not set(obj) <= _SPEC_KEYS:
        raise InvalidSpec("system spec fields")
    nodes = _positive_int(obj.get("nodes"), "nodes")
    cores = _positive_int(obj.get("cores_per_cpu"), "cores_per_cpu")
    accelerators = obj.get("accelerators", [])
    if not isinstance(accelerators, list):
        raise InvalidSpec("accelerators")
    parsed = []
    for entry in accelerators:
        if not isinstance(entry, dict) or set(entry) != _ACCEL_KEYS:
            raise InvalidSpec("accelerators")
        kind = entry["kind"]
        if not isinstance(kind, str) or not kind:
            raise InvalidSpec("accelerators.kind")
        parsed.append((kind, _positive_int(entry["count"], "accelerators.count")))
    return SystemSpec(nodes, cores, tuple(parsed))


def validate_spec(s: SystemSpec) -> None:
    if s.node_count < 1:
        raise InvalidSpec("nodes")
    if s.cores_per_cpu < 1:
        raise InvalidSpec("cores_per_cpu")
    for kind, count in s.accelerators:
        if not kind or count < 1:
            raise InvalidSpec("accelerators")


def classify(s: SystemSpec) -> SystemType:
    validate_spec(s)
    if s.node_count == 1:
        base = "I" if s.cores_per_cpu == 1 else "II"
    else:
        base = "III" if s.cores_per_cpu == 1 else "IV"
    return SystemType[base + ("_PLUS" if s.accelerators else "")]


def _accel_devices(s: SystemSpec) -> tuple[DeviceDescriptor, ...]:
    devices = []
    seen: dict[str, int] = {}
    for kind, count in s.accelerators:
        for _ in range(count):
            i = seen.get(kind, 0)
            seen[kind] = i + 1
            devices.append(
                DeviceDescriptor(
                    name=f"accel:{kind}{i}",
                    device_class=DeviceClass.EXTERNAL,
                    model_id=kind,
                    transport=TransportSpec.spawn(),
                )
            )
    return tuple(devices)


def _multicore_devices(s: SystemSpec) -> tuple[DeviceDescriptor, ...]:
    return tuple(
        DeviceDescriptor(
            name=f"multicore:node{i}[{s.cores_per_cpu}]",
            device_class=DeviceClass.MULTICORE,
            model_id="kernelset-v1",
            params={"workers": str(s.cores_per_cpu)},
        )
        for i in range(s.node_count)
    )


def _cluster_device(s: SystemSpec, nested: tuple[DeviceDescriptor, ...]) -> DeviceDescriptor:
    params = {}
    if nested:
        params["nodes"] = json.dumps([manifest_of(m) for m in nested])
    return DeviceDescriptor(
        name=f"cluster:all[{s.node_count}]",
        device_class=DeviceClass.CLUSTER,
        model_id="kernelset-v1",
        transport=TransportSpec.spawn(ranks=s.node_count),
        params=params,
    )


def reduce_system(s: SystemSpec) -> tuple[UpmView, list[ReductionStep]]:
    validate_spec(s)
    steps: list[ReductionStep] = []
    devices: list[DeviceDescriptor] = []
    current = s

    if current.accelerators:
        virtualized = _accel_devices(current)
        before, current = classify(current), replace(current, accelerators=())
        steps.append(ReductionStep(Rule.STRIP_ACCEL, before, classify(current), virtualized))
        devices.extend(virtualized)

    multicores: tuple[DeviceDescriptor, ...] = ()
    if current.cores_per_cpu > 1:
        multicores = _multicore_devices(current)
        before, current = classify(current), replace(current, cores_per_cpu=1)
        steps.append(ReductionStep(Rule.SPLIT_MULTICORE, before, classify(current), multicores))
        devices.extend(multicores)

    if current.node_count > 1:
        virtualized = (_cluster_device(current, multicores),)
        before, current = classify(current), replace(current, node_count=1)
        steps.append(ReductionStep(Rule.VIRTUALIZE_CLUSTER, before, classify(current), virtualized))
        devices.extend(virtualized)

    return UpmView(base=current, devices=tuple(devices)), steps
