#!/usr/bin/env python3
"""Open a device like a file, write a job, read the result.

Every installed compute resource is a "general printer": you hand it a
payload and it prints a result back.  The handle below behaves like an
open file: write, read, stat, close.
"""

import struct
import tempfile
from pathlib import Path

from upm import Registry, upm_open

with tempfile.TemporaryDirectory() as tmp:
    registry = Registry(Path(tmp) / "registry.json")

    registry.install({"name": "printer", "class": "echo", "model_id": "echo"})
    registry.install({
        "name": "summer", "class": "multicore", "model_id": "vecsum64",
        "params": {"workers": "4"},
    })

    with upm_open(registry, "upm://printer") as handle:
        handle.write(b"hello, device")
        print("echo printed:", handle.read())

    with upm_open(registry, "upm://summer") as handle:
        handle.write(struct.pack("<4d", 1.5, 2.5, 3.0, -1.0))
        handle.write(struct.pack("<2d", 10.0, 20.0))
        print("stat:", handle.control("stat"))
        total_1 = struct.unpack("<d", handle.read())[0]
        total_2 = struct.unpack("<d", handle.read())[0]
        print("sums in write order:", total_1, total_2)
