"""Reference plug-in: a standalone process speaking the framed protocol.

Serves one built-in kernel (echo by default) over stdio, or over TCP
with ``--listen``.  Doubles as the conformance fixture for third-party
plug-in authors: HELLO with your model id, answer REQUESTs with
RESPONSE or ERROR under the same job id, exit on BYE or EOF.
"""

from __future__ import annotations

import argparse
import socket
import sys

from .errors import UpmError
from .framing import Frame, FrameKind, FrameReader, encode_frame
from .kernels import resolve_kernel


def serve_stream(read, write, model: str) -> None:
    kernel = resolve_kernel(model)
    write(encode_frame(Frame(FrameKind.HELLO, payload=model.encode("utf-8"))))
    reader = FrameReader(read)
    while True:
        try:
            frame = reader.next_frame()
        except UpmError:
            return
        if frame is None or frame.kind is FrameKind.BYE:
            return
        if frame.kind is not FrameKind.REQUEST:
            write(encode_frame(Frame(FrameKind.ERROR, frame.job_id, frame.device_id, b"unsupported kind")))
            continue
        try:
            reply = Frame(FrameKind.RESPONSE, frame.job_id, frame.device_id, kernel.run(frame.payload))
        except UpmError as e:
            reply = Frame(FrameKind.ERROR, frame.job_id, frame.device_id, e.detail.encode("utf-8"))
        write(encode_frame(reply))


def _serve_stdio(model: str) -> None:
    stdout = sys.stdout.buffer

    def write(data: bytes) -> None:
        stdout.write(data)
        stdout.flush()

    serve_stream(sys.stdin.buffer.read1, write, model)


def _serve_tcp(listen: str, model: str, once: bool) -> None:
    host, _, port = listen.rpartition(":")
    server = socket.create_server((host or "127.0.0.1", int(port)))
    actual = server.getsockname()[1]
    print(f"listening {host or '127.0.0.1'} {actual}", flush=True)
    while True:
        conn, _addr = server.accept()
        try:
            serve_stream(conn.recv, conn.sendall, model)
        except OSError:
            pass
        finally:
            conn.close()
        if once:
            server.close()
            return


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="reference device plug-in")
    parser.add_argument("--model", default="echo", help="built-in kernel to serve")
    parser.add_argument("--listen", metavar="HOST:PORT", help="serve over TCP instead of stdio")
    parser.add_argument("--once", action="store_true", help="exit after the first TCP session")
    args = parser.parse_args(argv)
    try:
        resolve_kernel(args.model)
    except UpmError:
        parser.error(f"unknown model {args.model!r}")
    if args.listen:
        _serve_tcp(args.listen, args.model, args.once)
    else:
        _serve_stdio(args.model)
    return 0


if __name__ == "__main__":
    sys.exit(main())
