from __future__ import annotations

import subprocess
import sys

import pytest

from upm.registry import Registry


@pytest.fixture
def registry(tmp_path) -> Registry:
    return Registry(tmp_path / "registry.json")


@pytest.fixture
def plugin_server():
    """Start reference plug-ins in TCP mode; yields a factory returning
    their host:port address."""
    procs: list[subprocess.Popen] = []

    def launch(model: str) -> str:
        proc = subprocess.Popen(
            [sys.executable, "-m", "upm.plugin", "--model", model, "--listen", "127.0.0.1:0"],
            stdout=subprocess.PIPE,
            text=True,
        )
        procs.append(proc)
        line = proc.stdout.readline().split()
        assert line[:1] == ["listening"], line
        return f"{line[1]}:{line[2]}"

    yield launch
    for proc in procs:
        proc.kill()
        proc.wait(timeout=10)
