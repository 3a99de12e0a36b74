#!/usr/bin/env python3
"""One kernel, four device classes, identical bytes.

The same sort job runs inline, across a thread pool, across spawned
rank processes, and inside an external plug-in process speaking the
framed wire protocol.  Outputs are bit-identical by contract.
"""

import random
import struct
import sys
import tempfile
from pathlib import Path

from upm import Registry, upm_open

MANIFESTS = [
    {"name": "inline", "class": "echo", "model_id": "sortu32"},
    {"name": "pool", "class": "multicore", "model_id": "sortu32",
     "params": {"workers": "8"}},
    {"name": "ranks", "class": "cluster", "model_id": "sortu32",
     "transport": {"kind": "spawn", "ranks": 3}},
    {"name": "plugin", "class": "external", "model_id": "sortu32",
     "transport": {"kind": "spawn",
                   "command": [sys.executable, "-m", "upm.plugin", "--model", "sortu32"]}},
]

values = [random.randrange(0, 2**32) for _ in range(50_000)]
payload = struct.pack(f"<{len(values)}I", *values)

with tempfile.TemporaryDirectory() as tmp:
    registry = Registry(Path(tmp) / "registry.json")
    outputs = {}
    for manifest in MANIFESTS:
        registry.install(manifest)
        with upm_open(registry, f"upm://{manifest['name']}") as handle:
            handle.write(payload)
            outputs[manifest["name"]] = handle.read()

    reference = outputs.pop("inline")
    print("inline result:", len(reference), "bytes")
    for name, result in outputs.items():
        print(f"{name:>7} identical to inline: {result == reference}")
