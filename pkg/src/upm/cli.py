"""Operator command line: ``upm <command>``.

Every error path exits 1 after printing the error variant name on
stderr; usage errors exit 2.  Output of reduce/assign/couple is
line-oriented and byte-stable for fixed inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import coupler, reducer, scheduler
from .errors import UpmError
from .fileapi import upm_open
from .registry import Registry, default_registry_path
from .server import UpmServer

DEFAULT_RUN_TIMEOUT = 60.0
DEFAULT_MAX_STEPS = 1000


def _registry_from(args) -> Registry:
    path = Path(args.registry) if args.registry else default_registry_path()
    return Registry(path)


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UpmError(str(e)) from None


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _write_output(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def cmd_install(args) -> int:
    registry = _registry_from(args)
    descriptor = registry.install(_load_json(args.manifest))
    if args.probe:
        try:
            upm_open(registry, f"upm://{descriptor.name}").close()
        except UpmError:
            registry.uninstall(descriptor.name)
            raise
    print(f"installed {descriptor.name}")
    return 0


def cmd_uninstall(args) -> int:
    _registry_from(args).uninstall(args.name)
    print(f"uninstalled {args.name}")
    return 0


def cmd_list(args) -> int:
    for d in _registry_from(args).list():
        speed = scheduler.render_value(d.speed_factor)
        print(f"{d.name}\t{d.device_class.value}\t{d.model_id}\t{speed}")
    return 0


def cmd_run(args) -> int:
    registry = _registry_from(args)
    payload = _read_input(args.input)
    handle = upm_open(registry, f"upm://{args.device}")
    try:
        handle.write(payload)
        result = handle.read(args.timeout)
    finally:
        handle.close()
    _write_output(args.output, result)
    return 0


def cmd_reduce(args) -> int:
    spec = reducer.parse_system_spec(_load_json(args.spec))
    view, steps = reducer.reduce_system(spec)
    print(f"type={reducer.classify(spec).value} devices={len(view.devices)}")
    for d in view.devices:
        print(f"device\t{d.name}\t{d.device_class.value}\t{d.model_id}")
    if args.trace:
        for step in steps:
            print(
                f"trace\t{step.rule.value}\t{step.before.value}\t{step.after.value}"
                f"\t{len(step.virtualized)}"
            )
    return 0


def cmd_assign(args) -> int:
    registry = _registry_from(args)
    jobs = scheduler.parse_jobs(_load_json(args.jobs))
    devices = registry.list()
    assign = scheduler.optimal_assign if args.optimal else scheduler.greedy_assign
    assignment = assign(jobs, devices)
    for job in jobs:
        print(f"{job.id} -> {assignment.mapping[job.id]}")
    print(f"makespan={scheduler.render_value(scheduler.makespan(assignment, jobs, devices))}")
    return 0


def cmd_couple(args) -> int:
    registry = _registry_from(args)
    topology = coupler.parse_topology(_load_json(args.topology))
    coordinator = coupler.Coordinator(registry, topology)
    try:
        report = coordinator.run_until_quiescent(args.max_steps)
    finally:
        coordinator.shutdown()
    text = "\n".join(report.render_lines()) + "\n"
    sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    if report.state == "FAILED":
        print(f"BACKEND_FAILURE: app {report.failed_app}", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    registry = _registry_from(args)
    host, _, port = args.listen.rpartition(":")
    try:
        server = UpmServer(registry, host or "127.0.0.1", int(port))
    except OSError as e:
        print(f"BACKEND_FAILURE: listen: {e}", file=sys.stderr)
        return 1
    host, actual = server.address
    print(f"listening {host} {actual}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--registry",
        help="registry file path (env UPM_REGISTRY, else the user config dir)",
    )

    parser = argparse.ArgumentParser(prog="upm", description="device runtime control")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("install", parents=[common], help="install a device manifest")
    p.add_argument("manifest", help="manifest JSON file")
    p.add_argument("--probe", action="store_true", help="open and close the device once")
    p.set_defaults(func=cmd_install)

    p = sub.add_parser("uninstall", parents=[common], help="remove an installed device")
    p.add_argument("name")
    p.set_defaults(func=cmd_uninstall)

    p = sub.add_parser("list", parents=[common], help="list installed devices")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("run", parents=[common], help="run one job through a device")
    p.add_argument("--device", required=True)
    p.add_argument("--in", dest="input", default="-", help="payload file or - for stdin")
    p.add_argument("--out", dest="output", default="-", help="result file or - for stdout")
    p.add_argument("--timeout", type=float, default=DEFAULT_RUN_TIMEOUT)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reduce", parents=[common], help="reduce a machine description")
    p.add_argument("spec", help="system spec JSON file")
    p.add_argument("--trace", action="store_true", help="print the rewrite steps")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("assign", parents=[common], help="assign a job batch to devices")
    p.add_argument("--jobs", required=True, help="job batch JSON file")
    p.add_argument("--optimal", action="store_true", help="exhaustive search (small batches)")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("couple", parents=[common], help="run a coupled-application topology")
    p.add_argument("topology", help="topology JSON file")
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--report", help="also write the report to this file")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("serve", parents=[common], help="serve the runtime over TCP")
    p.add_argument("--listen", default="127.0.0.1:7707", metavar="HOST:PORT")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UpmError as e:
        print(f"{e.variant}: {e.detail}" if e.detail else e.variant, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
