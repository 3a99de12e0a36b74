#!/usr/bin/env python3
"""Couple two applications through the coordinator.

Each app is a script running inside its own cluster device; the
coordinator is the only bridge between them.  App "producer" streams
three text payloads to "consumer", which counts words and reports the
counts back.
"""

import struct
import tempfile
from pathlib import Path

from upm import Registry
from upm.coupler import Coordinator, parse_topology

TEXTS = ["a tiny payload", "four more words here", "one"]

producer = []
for text in TEXTS:
    producer.append({"op": "send", "dst": "consumer", "tag": "text", "data": text})
    producer.append({"op": "recv", "src": "consumer", "tag": "count"})
producer.append({"op": "halt"})

consumer = []
for _ in TEXTS:
    consumer += [
        {"op": "recv", "src": "producer", "tag": "text"},
        {"op": "compute", "kernel": "wordcount"},
        {"op": "send", "dst": "producer", "tag": "count", "last": True},
    ]
consumer.append({"op": "halt"})

with tempfile.TemporaryDirectory() as tmp:
    registry = Registry(Path(tmp) / "registry.json")
    for name in ("dev-producer", "dev-consumer"):
        registry.install({
            "name": name, "class": "cluster", "model_id": "appscript-v1",
            "transport": {"kind": "spawn", "ranks": 1},
        })
    topology = parse_topology({
        "buffer_bound": 2,
        "apps": [
            {"app_id": "producer", "device": "dev-producer", "script": producer},
            {"app_id": "consumer", "device": "dev-consumer", "script": consumer},
        ],
    })
    with Coordinator(registry, topology) as coordinator:
        report = coordinator.run_until_quiescent(200)
        print("state:", report.state, f"(after {report.steps} passes)")
        for line in report.render_lines()[:-1]:
            print(" ", line)
        counts = [
            struct.unpack("<Q", env.payload)[0]
            for env in coordinator.delivery_log
            if env.tag == "count"
        ]
        print("word counts seen by producer:", counts)
