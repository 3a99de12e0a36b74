"""Built-in kernels and their parallel decomposition plans.

Every kernel defines four operations:

    run(payload)          whole-payload semantics, single process
    shard(payload, n)     split into n contiguous shards (remainder last)
    partial(shard)        per-worker computation on one shard
    combine(partials)     merge partial results in shard order

The decomposition law ``combine([partial(s) for s in shard(p, n)]) ==
run(p)`` holds byte-exactly for every n >= 1; multicore and cluster
backends rely on it, so worker and rank counts never change output bits.

Shards are aligned to each kernel's natural unit: vecsum64 to its
4096-element chunk (so chunk sums are identical however the work is
split), sortu32 to 4-byte words, wordcount to UTF-8 codepoint starts.
"""

from __future__ import annotations

import heapq
import struct
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import BackendFailure

VECSUM_CHUNK = 4096  # elements per summation chunk; fixed for determinism

KERNELSET_V1 = ("echo", "vecsum64", "sortu32", "wordcount")
KERNEL_SETS: dict[str, tuple[str, ...]] = {"kernelset-v1": KERNELSET_V1}


@dataclass(frozen=True)
class Kernel:
    name: str
    run: Callable[[bytes], bytes]
    shard: Callable[[bytes, int], list[bytes]]
    partial: Callable[[bytes], bytes]
    combine: Callable[[Sequence[bytes]], bytes]


def _split_units(payload: bytes, unit: int, n: int) -> list[bytes]:
    """Contiguous split into n shards of whole units; the remainder units
    plus any ragged tail shorter than one unit go to the last shard."""
    per = (len(payload) // unit) // n
    cuts = [per * i * unit for i in range(n)] + [len(payload)]
    return [payload[cuts[i] : cuts[i + 1]] for i in range(n)]


# --- echo ---------------------------------------------------------------

def _echo_run(payload: bytes) -> bytes:
    return payload


def _echo_shard(payload: bytes, n: int) -> list[bytes]:
    return _split_units(payload, 1, n)


def _echo_combine(partials: Sequence[bytes]) -> bytes:
    return b"".join(partials)


# --- vecsum64 -----------------------------------------------------------

def _vecsum_check(payload: bytes) -> int:
    if len(payload) % 8:
        raise BackendFailure("payload length")
    return len(payload) // 8


def _chunk_sums(payload: bytes) -> list[float]:
    n = _vecsum_check(payload)
    values = struct.unpack(f"<{n}d", payload)
    sums = []
    for start in range(0, n, VECSUM_CHUNK):
        acc = 0.0
        for v in values[start : start + VECSUM_CHUNK]:
            acc += v
        sums.append(acc)
    return sums


def _vecsum_run(payload: bytes) -> bytes:
    total = 0.0
    for s in _chunk_sums(payload):
        total += s
    return struct.pack("<d", total)


def _vecsum_shard(payload: bytes, n: int) -> list[bytes]:
    _vecsum_check(payload)
    return _split_units(payload, VECSUM_CHUNK * 8, n)


def _vecsum_partial(shard: bytes) -> bytes:
    sums = _chunk_sums(shard)
    return struct.pack(f"<{len(sums)}d", *sums)


def _vecsum_combine(partials: Sequence[bytes]) -> bytes:
    total = 0.0
    for p in partials:
        for s in struct.unpack(f"<{len(p) // 8}d", p):
            total += s
    return struct.pack("<d", total)


# --- sortu32 ------------------------------------------------------------

def _sort_values(payload: bytes) -> list[int]:
    if len(payload) % 4:
        raise BackendFailure("payload length")
    return sorted(struct.unpack(f"<{len(payload) // 4}I", payload))


def _sort_run(payload: bytes) -> bytes:
    values = _sort_values(payload)
    return struct.pack(f"<{len(values)}I", *values)


def _sort_shard(payload: bytes, n: int) -> list[bytes]:
    if len(payload) % 4:
        raise BackendFailure("payload length")
    return _split_units(payload, 4, n)


def _sort_combine(partials: Sequence[bytes]) -> bytes:
    runs = [struct.unpack(f"<{len(p) // 4}I", p) for p in partials]
    merged = list(heapq.merge(*runs))
    return struct.pack(f"<{len(merged)}I", *merged)


# --- wordcount ----------------------------------------------------------

def _decode_text(payload: bytes) -> str:
    try:
        return payload.decode("utf-8")
    except UnicodeDecodeError:
        raise BackendFailure("utf-8") from None


def _wordcount_run(payload: bytes) -> bytes:
    return struct.pack("<Q", len(_decode_text(payload).split()))


def _wordcount_shard(payload: bytes, n: int) -> list[bytes]:
    _decode_text(payload)
    # Byte targets nudged forward to the next codepoint start so every
    # shard decodes on its own.
    cuts = []
    for i in range(n):
        off = len(payload) * i // n
        while off < len(payload) and (payload[off] & 0xC0) == 0x80:
            off += 1
        cuts.append(off)
    cuts.append(len(payload))
    cuts = [max(cuts[: i + 1]) for i in range(len(cuts))]
    return [payload[cuts[i] : cuts[i + 1]] for i in range(n)]


_WC_PARTIAL = struct.Struct("<QBBB")  # words, starts in word, ends in word, non-empty


def _wordcount_partial(shard: bytes) -> bytes:
    text = _decode_text(shard)
    if not text:
        return _WC_PARTIAL.pack(0, 0, 0, 0)
    return _WC_PARTIAL.pack(
        len(text.split()),
        0 if text[0].isspace() else 1,
        0 if text[-1].isspace() else 1,
        1,
    )


def _wordcount_combine(partials: Sequence[bytes]) -> bytes:
    total = 0
    prev_in_word = False
    for p in partials:
        count, starts, ends, nonempty = _WC_PARTIAL.unpack(p)
        if not nonempty:
            continue
        total += count
        if prev_in_word and starts:
            total -= 1  # the two shards split one word run
        prev_in_word = bool(ends)
    return struct.pack("<Q", total)


# --- sleepecho (delay-injecting kernel for order tests) ------------------

def _sleepecho_run(payload: bytes) -> bytes:
    if len(payload) < 8:
        raise BackendFailure("payload length")
    (delay,) = struct.unpack_from("<d", payload)
    if delay > 0:
        time.sleep(delay)
    return payload[8:]


def _sleepecho_shard(payload: bytes, n: int) -> list[bytes]:
    if len(payload) < 8:
        raise BackendFailure("payload length")
    return [payload] + [b""] * (n - 1)


def _sleepecho_partial(shard: bytes) -> bytes:
    return _sleepecho_run(shard) if shard else b""


KERNELS: dict[str, Kernel] = {
    "echo": Kernel("echo", _echo_run, _echo_shard, _echo_run, _echo_combine),
    "vecsum64": Kernel("vecsum64", _vecsum_run, _vecsum_shard, _vecsum_partial, _vecsum_combine),
    "sortu32": Kernel("sortu32", _sort_run, _sort_shard, _sort_run, _sort_combine),
    "wordcount": Kernel(
        "wordcount", _wordcount_run, _wordcount_shard, _wordcount_partial, _wordcount_combine
    ),
    # Not part of kernelset-v1; exists so tests can force out-of-order
    # completion inside concurrent backends.
    "sleepecho": Kernel(
        "sleepecho", _sleepecho_run, _sleepecho_shard, _sleepecho_partial, _echo_combine
    ),
}


def resolve_kernel(model_id: str) -> Kernel:
    kernel = KERNELS.get(model_id)
    if kernel is None:
        raise BackendFailure("model")
    return kernel


def models_of(model_id: str) -> tuple[str, ...]:
    """Kernel names a device with this model id can satisfy: the id itself
    plus, when it names a kernel set, every member of the set."""
    return KERNEL_SETS.get(model_id, (model_id,))
