"""Kernel semantics against plain oracles, plus the decomposition law."""

from __future__ import annotations

import random
import struct

import pytest

from upm.errors import BackendFailure
from upm.kernels import KERNELS, KERNELSET_V1, models_of, resolve_kernel

from util import KERNEL_ORACLES, oracle_vecsum64, pack_f64, pack_u32, unpack_u32


def test_echo_identity():
    echo = KERNELS["echo"]
    assert echo.run(b"") == b""
    assert echo.run(b"hi") == b"hi"
    blob = random.Random(1).randbytes(64 * 1024)
    assert echo.run(blob) == blob


def test_vecsum_empty_is_zero():
    assert KERNELS["vecsum64"].run(b"") == struct.pack("<d", 0.0)


def test_vecsum_small_exact():
    assert KERNELS["vecsum64"].run(pack_f64([1.0, 2.0, 3.0])) == struct.pack("<d", 6.0)


def test_vecsum_matches_chunked_oracle():
    rng = random.Random(2)
    for n in (1, 7, 4095, 4096, 4097, 10_000, 100_000):
        payload = pack_f64([rng.uniform(-1e9, 1e9) for _ in range(n)])
        assert KERNELS["vecsum64"].run(payload) == oracle_vecsum64(payload)


def test_vecsum_rejects_ragged_length():
    with pytest.raises(BackendFailure) as err:
        KERNELS["vecsum64"].run(b"abc")
    assert err.value.detail == "payload length"


def test_sortu32_examples():
    assert KERNELS["sortu32"].run(pack_u32([3, 1, 2])) == pack_u32([1, 2, 3])
    rng = random.Random(3)
    values = [rng.randrange(0, 2**32) for _ in range(100_000)]
    out = KERNELS["sortu32"].run(pack_u32(values))
    assert unpack_u32(out) == sorted(values)


def test_sortu32_rejects_ragged_length():
    with pytest.raises(BackendFailure):
        KERNELS["sortu32"].run(b"abcde")


def test_wordcount_examples():
    wc = KERNELS["wordcount"]
    assert wc.run("a  b\nc".encode()) == struct.pack("<Q", 3)
    assert wc.run(b"") == struct.pack("<Q", 0)
    assert wc.run("  \t\n ".encode()) == struct.pack("<Q", 0)
    assert wc.run("héllo wörld   three".encode()) == struct.pack("<Q", 3)


def test_wordcount_rejects_invalid_utf8():
    with pytest.raises(BackendFailure) as err:
        KERNELS["wordcount"].run(b"\xff\xfe")
    assert err.value.detail == "utf-8"


def _random_payload(rng: random.Random, model: str) -> bytes:
    if model == "vecsum64":
        return pack_f64([rng.uniform(-1e6, 1e6) for _ in range(rng.randrange(0, 9000))])
    if model == "sortu32":
        return pack_u32([rng.randrange(0, 2**32) for _ in range(rng.randrange(0, 3000))])
    if model == "wordcount":
        words = ["井", "word", "", "  ", "x" * 9, "éé", "\n"]
        return "".join(rng.choice(words) for _ in range(rng.randrange(0, 200))).encode()
    return rng.randbytes(rng.randrange(0, 2048))


@pytest.mark.parametrize("model", KERNELSET_V1)
def test_kernel_run_matches_oracle(model):
    rng = random.Random(hash(model) & 0xFFFF)
    kernel, oracle = KERNELS[model], KERNEL_ORACLES[model]
    for _ in range(50):
        payload = _random_payload(rng, model)
        assert kernel.run(payload) == oracle(payload)


@pytest.mark.parametrize("model", KERNELSET_V1)
@pytest.mark.parametrize("parts", [1, 2, 3, 5, 8])
def test_decomposition_law(model, parts):
    # combine(partial(shard)) must reproduce run() bytes for any split count
    rng = random.Random(1000 + parts)
    kernel = KERNELS[model]
    for _ in range(30):
        payload = _random_payload(rng, model)
        shards = kernel.shard(payload, parts)
        assert len(shards) == parts
        assert kernel.combine([kernel.partial(s) for s in shards]) == kernel.run(payload)


def test_shards_are_contiguous_with_remainder_last():
    payload = bytes(range(251))
    shards = KERNELS["echo"].shard(payload, 4)
    assert b"".join(shards) == payload
    assert [len(s) for s in shards] == [62, 62, 62, 65]


def test_wordcount_shards_decode_cleanly():
    payload = ("é" * 101).encode()  # 2-byte codepoints; naive splits would break
    for parts in (2, 3, 7):
        for shard in KERNELS["wordcount"].shard(payload, parts):
            shard.decode("utf-8")


def test_sleepecho_strips_delay_prefix():
    payload = struct.pack("<d", 0.0) + b"data"
    assert KERNELS["sleepecho"].run(payload) == b"data"


def test_resolve_unknown_model():
    with pytest.raises(BackendFailure) as err:
        resolve_kernel("nope")
    assert err.value.detail == "model"


def test_models_of_expands_kernel_sets():
    assert models_of("kernelset-v1") == KERNELSET_V1
    assert models_of("echo") == ("echo",)
