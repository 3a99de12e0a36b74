"""Wire format tests: golden bytes, round trips, corruption handling."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upm.errors import ProtocolError
from upm.framing import Frame, FrameKind, FrameReader, decode_frame, encode_frame

# Reference CRC-32 (reflected 0xEDB88320, init/xorout 0xFFFFFFFF), written
# here bit by bit so the trailer check does not lean on the codec's zlib.


def crc32_reference(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def test_reference_crc_check_value():
    assert crc32_reference(b"123456789") == 0xCBF43926


GOLDEN_REQUEST = bytes.fromhex(
    "55504d31"              # magic "UPM1"
    "01"                    # version 1
    "02"                    # kind REQUEST
    "0100000000000000"      # job id 1
    "0400" "6563686f"       # device id "echo"
    "02000000" "6869"       # payload "hi"
    "6bb8f6c5"              # crc32 over version..payload
)


def test_golden_request_frame():
    frame = Frame(FrameKind.REQUEST, 1, "echo", b"hi")
    encoded = encode_frame(frame)
    assert encoded == GOLDEN_REQUEST
    assert crc32_reference(encoded[4:-4]) == int.from_bytes(encoded[-4:], "little")


def test_golden_empty_bye_frame():
    encoded = encode_frame(Frame(FrameKind.BYE))
    assert len(encoded) == 24  # 4 magic + 16 header fields + 4 crc
    assert encoded[:4] == b"UPM1"
    assert crc32_reference(encoded[4:-4]) == int.from_bytes(encoded[-4:], "little")
    frame, used = decode_frame(encoded)
    assert used == 24
    assert frame == Frame(FrameKind.BYE)


def test_decode_inverts_golden():
    frame, used = decode_frame(GOLDEN_REQUEST)
    assert frame == Frame(FrameKind.REQUEST, 1, "echo", b"hi")
    assert used == len(GOLDEN_REQUEST)


frames = st.builds(
    Frame,
    kind=st.sampled_from(list(FrameKind)),
    job_id=st.integers(min_value=0, max_value=2**64 - 1),
    device_id=st.text(max_size=40),
    payload=st.binary(max_size=200),
)


@settings(max_examples=1000, deadline=None)
@given(frames)
def test_round_trip_identity(frame):
    encoded = encode_frame(frame)
    decoded, used = decode_frame(encoded)
    assert decoded == frame
    assert used == len(encoded)


@settings(max_examples=200, deadline=None)
@given(frames, frames, st.binary(max_size=16))
def test_concatenation_and_trailing_bytes(f1, f2, trailing):
    stream = encode_frame(f1) + encode_frame(f2) + trailing
    d1, used1 = decode_frame(stream)
    d2, used2 = decode_frame(stream[used1:])
    assert (d1, d2) == (f1, f2)
    assert stream[used1 + used2:] == trailing


def test_wrong_magic():
    bad = b"NOPE" + GOLDEN_REQUEST[4:]
    with pytest.raises(ProtocolError) as err:
        decode_frame(bad)
    assert err.value.detail == "magic"


@pytest.mark.parametrize("cut", [1, 5, 10, 16, len(GOLDEN_REQUEST) - 1])
def test_truncation(cut):
    with pytest.raises(ProtocolError) as err:
        decode_frame(GOLDEN_REQUEST[:cut])
    assert err.value.detail == "truncated"


def test_crc_corruption():
    corrupted = GOLDEN_REQUEST[:-1] + bytes([GOLDEN_REQUEST[-1] ^ 0x01])
    with pytest.raises(ProtocolError) as err:
        decode_frame(corrupted)
    assert err.value.detail == "crc"


def test_payload_corruption_hits_crc():
    body = bytearray(GOLDEN_REQUEST)
    body[-6] ^= 0xFF  # inside payload
    with pytest.raises(ProtocolError) as err:
        decode_frame(bytes(body))
    assert err.value.detail == "crc"


def test_unknown_kind_rejected():
    frame = encode_frame(Frame(FrameKind.BYE, 9, "dev", b"x"))
    body = bytearray(frame[4:-4])
    body[1] = 0x7F  # kind byte
    rebuilt = frame[:4] + bytes(body) + crc32_reference(bytes(body)).to_bytes(4, "little")
    with pytest.raises(ProtocolError) as err:
        decode_frame(rebuilt)
    assert err.value.detail == "kind"


def test_frame_reader_reassembles_chunked_stream():
    rng = random.Random(11)
    sent = [
        Frame(FrameKind.REQUEST, i, f"dev{i}", bytes(rng.randbytes(rng.randrange(0, 64))))
        for i in range(1, 21)
    ]
    stream = b"".join(encode_frame(f) for f in sent)
    cursor = 0

    def read(_n):
        nonlocal cursor
        if cursor >= len(stream):
            return b""
        step = rng.randrange(1, 7)
        chunk = stream[cursor : cursor + step]
        cursor += step
        return chunk

    reader = FrameReader(read)
    received = []
    while (frame := reader.next_frame()) is not None:
        received.append(frame)
    assert received == sent


def test_frame_reader_eof_mid_frame():
    stream = GOLDEN_REQUEST[:10]
    chunks = [stream, b""]
    reader = FrameReader(lambda _n: chunks.pop(0))
    with pytest.raises(ProtocolError) as err:
        reader.next_frame()
    assert err.value.detail == "truncated"
