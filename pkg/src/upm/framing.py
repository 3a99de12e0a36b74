"""Framed wire protocol used by external plug-ins and the served runtime.

Frame layout (all integers little-endian):

    ┌───────────┬─────────┬────────┬──────────┬─────────────────┬──────────────────┬─────────┐
    │ magic 4B  │ ver 1B  │ kind1B │ job_id8B │ dev len 2B + N  │ pay len 4B + M   │ crc 4B  │
    │ "UPM1"    │ =1      │ 1..6   │ u64      │ UTF-8 device id │ payload bytes    │ CRC-32  │
    └───────────┴─────────┴────────┴──────────┴─────────────────┴──────────────────┴─────────┘

The CRC-32 (IEEE polynomial, as in zip/zlib) covers every byte after the
magic, i.e. version through payload.  One frame is one message; there is
no fragmentation layer.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import Enum

from .errors import ProtocolError

MAGIC = b"UPM1"
VERSION = 1

_FIXED = struct.Struct("<BBQ")   # version, kind, job_id
_DEVLEN = struct.Struct("<H")
_PAYLEN = struct.Struct("<I")
_CRC = struct.Struct("<I")

MAX_DEVICE_ID = 0xFFFF
MAX_PAYLOAD = 0xFFFFFFFF


class FrameKind(Enum):
    HELLO = 1
    REQUEST = 2
    RESPONSE = 3
    ERROR = 4
    CONTROL = 5
    BYE = 6


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    job_id: int = 0
    device_id: str = ""
    payload: bytes = b""
    version: int = VERSION


def encode_frame(f: Frame) -> bytes:
    dev = f.device_id.encode("utf-8")
    if len(dev) > MAX_DEVICE_ID:
        raise ProtocolError("device_id too long")
    if len(f.payload) > MAX_PAYLOAD:
        raise ProtocolError("payload too long")
    body = (
        _FIXED.pack(f.version, f.kind.value, f.job_id)
        + _DEVLEN.pack(len(dev))
        + dev
        + _PAYLEN.pack(len(f.payload))
        + f.payload
    )
    return MAGIC + body + _CRC.pack(zlib.crc32(body))


def decode_frame(b: bytes) -> tuple[Frame, int]:
    """Decode the first complete frame in ``b``.

    Returns (frame, bytes consumed); trailing bytes are untouched so a
    stream reader can call this repeatedly on a growing buffer.  Raises
    ProtocolError("truncated") when more bytes are needed.
    """
    if len(b) >= 4 and b[:4] != MAGIC:
        raise ProtocolError("magic")
    header_end = 4 + _FIXED.size + _DEVLEN.size
    if len(b) < header_end:
        raise ProtocolError("truncated")
    version, kind_byte, job_id = _FIXED.unpack_from(b, 4)
    (dev_len,) = _DEVLEN.unpack_from(b, 4 + _FIXED.size)
    pay_off = header_end + dev_len
    if len(b) < pay_off + _PAYLEN.size:
        raise ProtocolError("truncated")
    (pay_len,) = _PAYLEN.unpack_from(b, pay_off)
    end = pay_off + _PAYLEN.size + pay_len + _CRC.size
    if len(b) < end:
        raise ProtocolError("truncated")
    body = b[4 : end - _CRC.size]
    (crc,) = _CRC.unpack_from(b, end - _CRC.size)
    if zlib.crc32(body) != crc:
        raise ProtocolError("crc")
    if version != VERSION:
        raise ProtocolError("version")
    try:
        kind = FrameKind(kind_byte)
    except ValueError:
        raise ProtocolError("kind") from None
    device_id = b[header_end:pay_off].decode("utf-8")
    payload = bytes(b[pay_off + _PAYLEN.size : pay_off + _PAYLEN.size + pay_len])
    return Frame(kind, job_id, device_id, payload, version), end


class FrameReader:
    """Incremental decoder over a byte stream (socket or pipe)."""

    def __init__(self, read):
        self._read = read  # callable(n) -> bytes, b"" on EOF
        self._buf = b""

    def next_frame(self) -> Frame | None:
        """Return the next frame, or None on clean EOF at a frame boundary."""
        while True:
            if self._buf:
                try:
                    frame, used = decode_frame(self._buf)
                except ProtocolError as e:
                    if e.detail != "truncated":
                        raise
                else:
                    self._buf = self._buf[used:]
                    return frame
            chunk = self._read(65536)
            if not chunk:
                if self._buf:
                    raise ProtocolError("truncated")
                return None
            self._buf += chunk
