"""Coupled-application scripts and their addressed message envelopes.

An application is a finite action list interpreted inside its cluster
device (model id ``appscript-v1``).  The coordinator drives the script
through ordinary device jobs:

    b"SCRIPT\\n" + JSON        load the script            -> b"K"
    b"POLL\\n" + JSON list     pop one outbound envelope  -> b"E"+env | b"N"+status
    b"DELIVER\\n" + envelope   deposit one inbound        -> b"K"
    b"STATUS\\n"               report progress            -> b"T"+status

The POLL body lists destination app ids the coordinator cannot accept
right now; an envelope addressed to one of them stays queued at the
source.  Status bodies are JSON: {"halted": bool, "outbound": int}.
"""

from __future__ import annotations

import json
import struct
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Optional

from .errors import BackendFailure, InvalidSpec
from .kernels import resolve_kernel

APPSCRIPT_MODEL = "appscript-v1"

CMD_SCRIPT = b"SCRIPT\n"
CMD_POLL = b"POLL\n"
CMD_DELIVER = b"DELIVER\n"
CMD_STATUS = b"STATUS\n"

_ENV_HEAD = struct.Struct("<HHHQI")  # src len, dst len, tag len, seq, payload len


@dataclass(frozen=True)
class Envelope:
    src: str
    dst: str
    tag: str
    seq: int
    payload: bytes

    def encode(self) -> bytes:
        src, dst, tag = self.src.encode(), self.dst.encode(), self.tag.encode()
        return (
            _ENV_HEAD.pack(len(src), len(dst), len(tag), self.seq, len(self.payload))
            + src + dst + tag + self.payload
        )


def decode_envelope(b: bytes) -> Envelope:
    if len(b) < _ENV_HEAD.size:
        raise BackendFailure("envelope")
    src_len, dst_len, tag_len, seq, pay_len = _ENV_HEAD.unpack_from(b)
    off = _ENV_HEAD.size
    if len(b) != off + src_len + dst_len + tag_len + pay_len:
        raise BackendFailure("envelope")
    src = b[off : off + src_len].decode()
    off += src_len
    dst = b[off : off + dst_len].decode()
    off += dst_len
    tag = b[off : off + tag_len].decode()
    off += tag_len
    return Envelope(src, dst, tag, seq, bytes(b[off:]))


@dataclass(frozen=True)
class Action:
    op: str                       # send | recv | compute | halt
    peer: str = ""                # send: dst app, recv: src app
    tag: str = ""
    data: Optional[bytes] = None  # send literal; None means "use last value"
    kernel: str = ""              # compute only


def action_to_json(a: Action) -> dict:
    obj: dict = {"op": a.op}
    if a.op == "send":
        obj.update(dst=a.peer, tag=a.tag)
        if a.data is None:
            obj["last"] = True
        else:
            obj["data_hex"] = a.data.hex()
    elif a.op == "recv":
        obj.update(src=a.peer, tag=a.tag)
    elif a.op == "compute":
        obj["kernel"] = a.kernel
    return obj


def parse_action(obj) -> Action:
    if not isinstance(obj, dict) or not isinstance(obj.get("op"), str):
        raise InvalidSpec("script action")
    op = obj["op"]
    if op == "send":
        if not set(obj) <= {"op", "dst", "tag", "data", "data_hex", "last"}:
            raise InvalidSpec("script action")
        dst, tag = obj.get("dst"), obj.get("tag")
        if not isinstance(dst, str) or not dst or not isinstance(tag, str):
            raise InvalidSpec("script send")
        sources = [k for k in ("data", "data_hex", "last") if k in obj]
        if len(sources) != 1:
            raise InvalidSpec("script send payload")
        if "data" in obj:
            if not isinstance(obj["data"], str):
                raise InvalidSpec("script send payload")
            data: Optional[bytes] = obj["data"].encode("utf-8")
        elif "data_hex" in obj:
            try:
                data = bytes.fromhex(obj["data_hex"])
            except (TypeError, ValueError):
                raise InvalidSpec("script send payload") from None
        else:
            if obj["last"] is not True:
                raise InvalidSpec("script send payload")
            data = None
        return Action("send", peer=dst, tag=tag, data=data)
    if op == "recv":
        if set(obj) != {"op", "src", "tag"}:
            raise InvalidSpec("script recv")
        src, tag = obj["src"], obj["tag"]
        if not isinstance(src, str) or not src or not isinstance(tag, str):
            raise InvalidSpec("script recv")
        return Action("recv", peer=src, tag=tag)
    if op == "compute":
        if set(obj) != {"op", "kernel"} or not isinstance(obj["kernel"], str):
            raise InvalidSpec("script compute")
        return Action("compute", kernel=obj["kernel"])
    if op == "halt":
        if set(obj) != {"op"}:
            raise InvalidSpec("script halt")
        return Action("halt")
    raise InvalidSpec(f"script op {op!r}")


def parse_script(obj) -> tuple[Action, ...]:
    if not isinstance(obj, list):
        raise InvalidSpec("script")
    return tuple(parse_action(a) for a in obj)


class ScriptDriver:
    """Interprets one application's action list.

    The script advances as far as it can whenever the coordinator touches
    the app; a recv with an empty inbox is the only blocking point.
    """

    def __init__(self, app_id: str, actions: tuple[Action, ...]):
        self.app_id = app_id
        self.actions = actions
        self.pc = 0
        self.halted = False
        self.failed: Optional[str] = None
        self.last = b""
        self.outbound: deque[Envelope] = deque()
        self._inbox: dict[tuple[str, str], deque[Envelope]] = defaultdict(deque)
        self._seq: dict[tuple[str, str], int] = defaultdict(int)

    def advance(self) -> None:
        while not self.halted and self.failed is None and self.pc < len(self.actions):
            a = self.actions[self.pc]
            if a.op == "send":
                channel = (a.peer, a.tag)
                self._seq[channel] += 1
                payload = self.last if a.data is None else a.data
                self.outbound.append(
                    Envelope(self.app_id, a.peer, a.tag, self._seq[channel], payload)
                )
            elif a.op == "recv":
                queue = self._inbox[(a.peer, a.tag)]
                if not queue:
                    return
                self.last = queue.popleft().payload
            elif a.op == "compute":
                try:
                    self.last = resolve_kernel(a.kernel).run(self.last)
                except BackendFailure as e:
                    self.failed = f"compute: {e.detail}"
                    return
            else:  # halt
                self.halted = True
            self.pc += 1

    def deliver(self, env: Envelope) -> None:
        self._inbox[(env.src, env.tag)].append(env)
        self.advance()

    def poll(self, excluded: frozenset[str]) -> Optional[Envelope]:
        self.advance()
        if self.failed is None and self.outbound and self.outbound[0].dst not in excluded:
            return self.outbound.popleft()
        return None

    def status(self) -> dict:
        return {"halted": self.halted, "outbound": len(self.outbound)}


def handle_command(driver_slot: list, payload: bytes) -> bytes:
    """Dispatch one coupling command against the (single) driver slot.

    Returns the response payload; raises BackendFailure for unknown
    commands, missing scripts, or a failed script.
    """
    if payload.startswith(CMD_SCRIPT):
        obj = json.loads(payload[len(CMD_SCRIPT):].decode("utf-8"))
        try:
            driver = ScriptDriver(obj["app_id"], parse_script(obj["script"]))
        except (KeyError, InvalidSpec, TypeError) as e:
            raise BackendFailure(f"script: {e}") from None
        driver_slot[:] = [driver]
        return b"K"
    if not driver_slot:
        raise BackendFailure("no script loaded")
    driver: ScriptDriver = driver_slot[0]
    if payload.startswith(CMD_POLL):
        excluded = frozenset(json.loads(payload[len(CMD_POLL):].decode("utf-8")))
        env = driver.poll(excluded)
        if driver.failed:
            raise BackendFailure(driver.failed)
        if env is not None:
            return b"E" + env.encode()
        return b"N" + json.dumps(driver.status(), sort_keys=True).encode()
    if payload.startswith(CMD_DELIVER):
        driver.deliver(decode_envelope(payload[len(CMD_DELIVER):]))
        if driver.failed:
            raise BackendFailure(driver.failed)
        return b"K"
    if payload.startswith(CMD_STATUS):
        return b"T" + json.dumps(driver.status(), sort_keys=True).encode()
    raise BackendFailure("command")
