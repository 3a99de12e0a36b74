"""Rank process of a cluster device (``python -m upm.backends.cluster_worker``).

Rank 0 receives device jobs from the router's host side, scatters shards
to the other ranks, gathers partials in rank order, and returns the
combined result.  When the device model is ``appscript-v1`` rank 0 hosts
the coupled-application script driver instead.

Message grammar (single-byte opcode prefixes):

    host -> rank0, tag "cmd":    J u64 wire_id, u16 model len, model, payload
                                 S (stop)
    rank0 -> rank r, tag "cmd":  H u64 wire_id, u16 model len, model, shard
                                 S (stop)
    rank r -> rank0, tag "partial":  u64 wire_id, u8 ok, data or error detail
    rank0 -> host, tag "result":     u64 wire_id, u8 ok, data or error detail
"""

from __future__ import annotations

import argparse
import struct
import sys

from .. import appscript
from ..errors import UpmError
from ..kernels import resolve_kernel
from ..minimp import HOST, Endpoint

_ID = struct.Struct("<Q")
_MODEL_LEN = struct.Struct("<H")


def pack_job(op: bytes, wire_id: int, model: str, payload: bytes) -> bytes:
    model_b = model.encode("utf-8")
    return op + _ID.pack(wire_id) + _MODEL_LEN.pack(len(model_b)) + model_b + payload


def unpack_job(msg: bytes) -> tuple[int, str, bytes]:
    (wire_id,) = _ID.unpack_from(msg, 1)
    (model_len,) = _MODEL_LEN.unpack_from(msg, 1 + _ID.size)
    off = 1 + _ID.size + _MODEL_LEN.size
    return wire_id, msg[off : off + model_len].decode("utf-8"), msg[off + model_len :]


def pack_reply(wire_id: int, ok: bool, data: bytes) -> bytes:
    return _ID.pack(wire_id) + bytes([1 if ok else 0]) + data


def unpack_reply(msg: bytes) -> tuple[int, bool, bytes]:
    (wire_id,) = _ID.unpack_from(msg)
    return wire_id, msg[_ID.size] == 1, msg[_ID.size + 1 :]


def _spmd_run(ep: Endpoint, wire_id: int, model: str, payload: bytes) -> tuple[bool, bytes]:
    try:
        kernel = resolve_kernel(model)
        shards = kernel.shard(payload, ep.size)
    except UpmError as e:
        return False, e.detail.encode("utf-8")
    for r in range(1, ep.size):
        ep.mp_send(r, "cmd", pack_job(b"H", wire_id, model, shards[r]))
    try:
        partials = [kernel.partial(shards[0])]
    except UpmError as e:
        partials = None
        error = f"rank 0: {e.detail}"
    for r in range(1, ep.size):
        got_id, ok, data = unpack_reply(ep.mp_recv(r, "partial"))
        if got_id != wire_id:
            return False, f"rank {r}: reply for job {got_id}".encode()
        if not ok and partials is not None:
            partials = None
            error = f"rank {r}: {data.decode('utf-8', 'replace')}"
        elif partials is not None:
            partials.append(data)
    if partials is None:
        return False, error.encode("utf-8")
    try:
        return True, kernel.combine(partials)
    except UpmError as e:
        return False, e.detail.encode("utf-8")


def _rank0_loop(ep: Endpoint) -> None:
    driver_slot: list = []
    while True:
        msg = ep.mp_recv(HOST, "cmd")
        if msg[:1] == b"S":
            stop = b"S"
            for r in range(1, ep.size):
                ep.mp_send(r, "cmd", stop)
            return
        wire_id, model, payload = unpack_job(msg)
        if model == appscript.APPSCRIPT_MODEL:
            try:
                ok, data = True, appscript.handle_command(driver_slot, payload)
            except UpmError as e:
                ok, data = False, e.detail.encode("utf-8")
        else:
            ok, data = _spmd_run(ep, wire_id, model, payload)
        ep.mp_send(HOST, "result", pack_reply(wire_id, ok, data))


def _worker_loop(ep: Endpoint) -> None:
    while True:
        msg = ep.mp_recv(0, "cmd")
        if msg[:1] == b"S":
            return
        wire_id, model, shard = unpack_job(msg)
        try:
            reply = pack_reply(wire_id, True, resolve_kernel(model).partial(shard))
        except UpmError as e:
            reply = pack_reply(wire_id, False, e.detail.encode("utf-8"))
        ep.mp_send(0, "partial", reply)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--device", required=True)
    parser.add_argument("--rank", type=int, required=True)
    parser.add_argument("--size", type=int, required=True)
    parser.add_argument("--connect", required=True, metavar="HOST:PORT")
    args = parser.parse_args(argv)

    host, _, port = args.connect.rpartition(":")
    ep = Endpoint((host, int(port)), args.rank, args.size, args.device)
    ep.mp_barrier()  # all ranks up before the first job
    try:
        if args.rank == 0:
            _rank0_loop(ep)
        else:
            _worker_loop(ep)
    finally:
        ep.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
