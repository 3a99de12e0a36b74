"""Shared manifest builders and oracles for the test suite."""

from __future__ import annotations

import struct
import sys


def echo_manifest(name="echo0", model="echo", **extra):
    manifest = {"name": name, "class": "echo", "model_id": model,
                "languages": ["kernelset-v1"]}
    manifest.update(extra)
    return manifest


def multicore_manifest(name="mc0", model="echo", workers=2, **extra):
    manifest = {"name": name, "class": "multicore", "model_id": model,
                "languages": ["kernelset-v1"], "params": {"workers": str(workers)}}
    manifest.update(extra)
    return manifest


def cluster_manifest(name="clu0", model="echo", ranks=2, **extra):
    manifest = {"name": name, "class": "cluster", "model_id": model,
                "languages": ["kernelset-v1"],
                "transport": {"kind": "spawn", "ranks": ranks}}
    manifest.update(extra)
    return manifest


def plugin_manifest(name="ext0", model="echo", **extra):
    command = [sys.executable, "-m", "upm.plugin", "--model", model]
    manifest = {"name": name, "class": "external", "model_id": model,
                "languages": ["kernelset-v1"],
                "transport": {"kind": "spawn", "command": command}}
    manifest.update(extra)
    return manifest


def pack_f64(values) -> bytes:
    return struct.pack(f"<{len(values)}d", *values)


def pack_u32(values) -> bytes:
    return struct.pack(f"<{len(values)}I", *values)


def unpack_u32(payload: bytes):
    return list(struct.unpack(f"<{len(payload) // 4}I", payload))


# Independent oracles: deliberately plain re-statements of the kernel
# semantics, kept free of the production shard/partial/combine machinery.

def oracle_vecsum64(payload: bytes) -> bytes:
    n = len(payload) // 8
    values = struct.unpack(f"<{n}d", payload)
    chunk_sums = []
    for start in range(0, n, 4096):
        acc = 0.0
        for v in values[start : start + 4096]:
            acc += v
        chunk_sums.append(acc)
    total = 0.0
    for s in chunk_sums:
        total += s
    return struct.pack("<d", total)


def oracle_sortu32(payload: bytes) -> bytes:
    return pack_u32(sorted(unpack_u32(payload)))


def oracle_wordcount(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload.decode("utf-8").split()))


def oracle_echo(payload: bytes) -> bytes:
    return payload


KERNEL_ORACLES = {
    "echo": oracle_echo,
    "vecsum64": oracle_vecsum64,
    "sortu32": oracle_sortu32,
    "wordcount": oracle_wordcount,
}
