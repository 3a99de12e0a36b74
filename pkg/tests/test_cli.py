"""Command-line contract: flows, exit codes, stderr variants, stable output."""

from __future__ import annotations

import json
import struct
import subprocess
import sys
from pathlib import Path

import pytest

from util import echo_manifest, multicore_manifest

CLI = [sys.executable, "-m", "upm.cli"]


@pytest.fixture
def env(tmp_path, monkeypatch):
    registry_path = tmp_path / "registry.json"
    monkeypatch.setenv("UPM_REGISTRY", str(registry_path))
    import os

    return dict(os.environ)


def run_cli(args, env, input_bytes=b""):
    return subprocess.run(
        CLI + args, input=input_bytes, capture_output=True, env=env, timeout=120
    )


def write_json(tmp_path: Path, name: str, obj) -> str:
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_install_list_uninstall_flow(tmp_path, env):
    manifest = write_json(tmp_path, "echo.json", echo_manifest())
    assert run_cli(["install", manifest], env).returncode == 0
    listing = run_cli(["list"], env)
    assert listing.returncode == 0
    assert listing.stdout.decode() == "echo0\techo\techo\t1\n"
    assert run_cli(["uninstall", "echo0"], env).returncode == 0
    assert run_cli(["list"], env).stdout == b""


def test_install_twice_reports_variant(tmp_path, env):
    manifest = write_json(tmp_path, "echo.json", echo_manifest())
    run_cli(["install", manifest], env)
    second = run_cli(["install", manifest], env)
    assert second.returncode == 1
    assert second.stderr.decode().startswith("ALREADY_INSTALLED")


def test_install_invalid_manifest(tmp_path, env):
    manifest = write_json(tmp_path, "bad.json", echo_manifest(speed_factor=0))
    result = run_cli(["install", manifest], env)
    assert result.returncode == 1
    assert result.stderr.decode().startswith("INVALID_MANIFEST")


def test_install_probe_rolls_back_on_failure(tmp_path, env):
    manifest = write_json(tmp_path, "bad.json", echo_manifest(model_id="ghost-model"))
    result = run_cli(["install", manifest, "--probe"], env)
    assert result.returncode == 1
    assert result.stderr.decode().startswith("BACKEND_FAILURE")
    assert run_cli(["list"], env).stdout == b""


def test_run_echo_stdin_stdout(tmp_path, env):
    run_cli(["install", write_json(tmp_path, "echo.json", echo_manifest())], env)
    result = run_cli(["run", "--device", "echo0"], env, input_bytes=b"hi")
    assert result.returncode == 0
    assert result.stdout == b"hi"


def test_run_unknown_device(env):
    result = run_cli(["run", "--device", "nope"], env, input_bytes=b"x")
    assert result.returncode == 1
    assert result.stderr.decode().startswith("NOT_INSTALLED")


def test_run_vecsum_files(tmp_path, env):
    run_cli(
        ["install", write_json(tmp_path, "mc.json", multicore_manifest(name="sum", model="vecsum64"))],
        env,
    )
    payload = tmp_path / "in.bin"
    payload.write_bytes(struct.pack("<3d", 1.0, 2.0, 3.0))
    out = tmp_path / "out.bin"
    result = run_cli(
        ["run", "--device", "sum", "--in", str(payload), "--out", str(out)], env
    )
    assert result.returncode == 0
    assert struct.unpack("<d", out.read_bytes()) == (6.0,)


def test_usage_error_exits_two(env):
    assert run_cli(["run"], env).returncode == 2
    assert run_cli(["bogus-command"], env).returncode == 2


def test_reduce_type_one(tmp_path, env):
    spec = write_json(tmp_path, "spec.json", {"nodes": 1, "cores_per_cpu": 1})
    result = run_cli(["reduce", spec], env)
    assert result.returncode == 0
    assert result.stdout.decode() == "type=I devices=0\n"


def test_reduce_golden_stable(tmp_path, env):
    spec = write_json(
        tmp_path,
        "spec.json",
        {"nodes": 4, "cores_per_cpu": 8, "accelerators": [{"kind": "gpu", "count": 2}]},
    )
    first = run_cli(["reduce", spec, "--trace"], env)
    second = run_cli(["reduce", spec, "--trace"], env)
    assert first.returncode == second.returncode == 0
    assert first.stdout == second.stdout
    lines = first.stdout.decode().splitlines()
    assert lines[0] == "type=IV+ devices=7"
    assert lines[-1] == "trace\tVIRTUALIZE_CLUSTER\tIII\tI\t1"


def test_reduce_invalid_spec(tmp_path, env):
    spec = write_json(tmp_path, "spec.json", {"nodes": 0, "cores_per_cpu": 1})
    result = run_cli(["reduce", spec], env)
    assert result.returncode == 1
    assert result.stderr.decode().startswith("INVALID_SPEC")


def test_assign_golden_stable(tmp_path, env):
    for name in ("worker-a", "worker-b"):
        run_cli(["install", write_json(tmp_path, f"{name}.json", echo_manifest(name=name))], env)
    jobs = write_json(
        tmp_path,
        "jobs.json",
        [
            {"id": "j1", "model_id": "echo", "language": "kernelset-v1", "cost": 4},
            {"id": "j2", "model_id": "echo", "language": "kernelset-v1", "cost": 3},
            {"id": "j3", "model_id": "echo", "language": "kernelset-v1", "cost": 2},
        ],
    )
    outputs = [run_cli(["assign", "--jobs", jobs] + extra, env) for extra in ([], [], ["--optimal"])]
    assert outputs[0].stdout == outputs[1].stdout
    assert outputs[0].stdout.decode() == "j1 -> worker-a\nj2 -> worker-b\nj3 -> worker-b\nmakespan=5\n"
    assert outputs[2].stdout.decode().endswith("makespan=5\n")


def test_assign_single_job(tmp_path, env):
    run_cli(["install", write_json(tmp_path, "e.json", echo_manifest())], env)
    jobs = write_json(
        tmp_path, "jobs.json",
        [{"id": "solo", "model_id": "echo", "language": "kernelset-v1", "cost": 3}],
    )
    result = run_cli(["assign", "--jobs", jobs], env)
    assert result.stdout.decode() == "solo -> echo0\nmakespan=3\n"


def test_assign_infeasible(tmp_path, env):
    jobs = write_json(
        tmp_path, "jobs.json",
        [{"id": "j", "model_id": "echo", "language": "cuda", "cost": 1}],
    )
    result = run_cli(["assign", "--jobs", jobs], env)
    assert result.returncode == 1
    assert result.stderr.decode().startswith("INFEASIBLE_JOB")


PING_PONG = {
    "buffer_bound": 2,
    "apps": [
        {
            "app_id": "a",
            "device": "dev-a",
            "script": [
                {"op": "send", "dst": "b", "tag": "ping", "data": "ping"},
                {"op": "recv", "src": "b", "tag": "pong"},
                {"op": "halt"},
            ],
        },
        {
            "app_id": "b",
            "device": "dev-b",
            "script": [
                {"op": "recv", "src": "a", "tag": "ping"},
                {"op": "send", "dst": "a", "tag": "pong", "last": True},
                {"op": "halt"},
            ],
        },
    ],
}


def _install_coupling_devices(tmp_path, env):
    for name in ("dev-a", "dev-b"):
        manifest = {
            "name": name, "class": "cluster", "model_id": "appscript-v1",
            "transport": {"kind": "spawn", "ranks": 1},
        }
        run_cli(["install", write_json(tmp_path, f"{name}.json", manifest)], env)


def test_couple_golden_stable(tmp_path, env):
    _install_coupling_devices(tmp_path, env)
    topology = write_json(tmp_path, "topology.json", PING_PONG)
    report_path = tmp_path / "report.txt"
    first = run_cli(["couple", topology, "--report", str(report_path)], env)
    second = run_cli(["couple", topology], env)
    assert first.returncode == second.returncode == 0
    assert first.stdout == second.stdout
    assert first.stdout.decode() == (
        "channel a b ping 1\nchannel b a pong 1\nstate=QUIESCENT\n"
    )
    assert report_path.read_bytes() == first.stdout


def test_couple_stalled_exit_zero(tmp_path, env):
    _install_coupling_devices(tmp_path, env)
    deadlock = {
        "apps": [
            {"app_id": "a", "device": "dev-a",
             "script": [{"op": "recv", "src": "b", "tag": "never"}, {"op": "halt"}]},
            {"app_id": "b", "device": "dev-b",
             "script": [{"op": "recv", "src": "a", "tag": "never"}, {"op": "halt"}]},
        ]
    }
    topology = write_json(tmp_path, "deadlock.json", deadlock)
    result = run_cli(["couple", topology, "--max-steps", "5"], env)
    assert result.returncode == 0
    assert result.stdout.decode() == "state=STALLED\n"


def test_registry_flag_overrides_env(tmp_path, env):
    other = tmp_path / "other.json"
    manifest = write_json(tmp_path, "echo.json", echo_manifest())
    assert run_cli(["install", manifest, "--registry", str(other)], env).returncode == 0
    assert run_cli(["list"], env).stdout == b""  # env registry untouched
    listing = run_cli(["list", "--registry", str(other)], env)
    assert listing.stdout.decode().startswith("echo0\t")
