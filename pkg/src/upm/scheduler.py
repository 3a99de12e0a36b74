"""Job assignment across installed devices, minimizing estimated makespan.

Cost model: each job declares an abstract cost; a device finishes a job
in cost / speed_factor time units.  Loads are exact rationals so that
tie-breaks never depend on rounding.

``greedy_assign`` is longest-processing-time list scheduling on related
machines; ``optimal_assign`` is an exhaustive search with branch-and-bound
pruning, guarded to small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InfeasibleJob, InvalidSpec
from .kernels import models_of
from .model import DeviceDescriptor, parse_speed

OPTIMAL_MAX_JOBS = 12
OPTIMAL_MAX_DEVICES = 4


@dataclass(frozen=True)
class JobSpec:
    id: str
    model_id: str
    language: str
    cost: Fraction


@dataclass(frozen=True)
class Assignment:
    mapping: Mapping[str, str]  # job id -> device name


_JOB_KEYS = {"id", "model_id", "language", "cost"}


def parse_jobs(obj) -> list[JobSpec]:
    if not isinstance(obj, list):
        raise InvalidSpec("jobs")
    jobs = []
    seen = set()
    for entry in obj:
        if not isinstance(entry, dict) or set(entry) != _JOB_KEYS:
            raise InvalidSpec("job fields")
        job_id, model_id, language = entry["id"], entry["model_id"], entry["language"]
        if not isinstance(job_id, str) or not job_id or job_id in seen:
            raise InvalidSpec("job id")
        if not isinstance(model_id, str) or not isinstance(language, str):
            raise InvalidSpec("job fields")
        seen.add(job_id)
        try:
            cost = parse_speed(entry["cost"])
        except Exception:
            raise InvalidSpec("job cost") from None
        if cost <= 0:
            raise InvalidSpec("job cost")
        jobs.append(JobSpec(job_id, model_id, language, cost))
    return jobs


def feasible(job: JobSpec, device: DeviceDescriptor) -> bool:
    """A device can run a job when it speaks the job's language tag and
    its resident model (or model set) covers the job's model."""
    return job.language in device.languages and job.model_id in models_of(device.model_id)


def makespan(
    assignment: Assignment,
    jobs: Sequence[JobSpec],
    devices: Sequence[DeviceDescriptor],
) -> Fraction:
    by_id = {j.id: j for j in jobs}
    loads = {d.name: Fraction(0) for d in devices}
    for job_id, device_name in assignment.mapping.items():
        job = by_id[job_id]
        loads[device_name] += job.cost / _speed_of(devices, device_name)
    return max(loads.values(), default=Fraction(0))


def _speed_of(devices: Sequence[DeviceDescriptor], name: str) -> Fraction:
    for d in devices:
        if d.name == name:
            return d.speed_factor
    raise InvalidSpec(f"device {name!r}")


def greedy_assign(
    jobs: Iterable[JobSpec], devices: Sequence[DeviceDescriptor]
) -> Assignment:
    """Place jobs in cost-descending order (ties: id ascending), each on the
    feasible device that finishes it earliest (ties: name ascending)."""
    ordered = sorted(jobs, key=lambda j: (-j.cost, j.id))
    ranked = sorted(devices, key=lambda d: d.name)
    loads = {d.name: Fraction(0) for d in ranked}
    mapping: dict[str, str] = {}
    for job in ordered:
        candidates = [d for d in ranked if feasible(job, d)]
        if not candidates:
            raise InfeasibleJob(job.id)
        best = min(candidates, key=lambda d: (loads[d.name] + job.cost / d.speed_factor, d.name))
        loads[best.name] += job.cost / best.speed_factor
        mapping[job.id] = best.name
    return Assignment(mapping)


def optimal_assign(
    jobs: Sequence[JobSpec], devices: Sequence[DeviceDescriptor]
) -> Assignment:
    """Exhaustive minimal-makespan assignment; among optima, the smallest
    under lexicographic (job id -> device name) order."""
    if len(jobs) > OPTIMAL_MAX_JOBS or len(devices) > OPTIMAL_MAX_DEVICES:
        raise InvalidSpec("size")
    ordered = sorted(jobs, key=lambda j: j.id)
    ranked = sorted(devices, key=lambda d: d.name)
    feasible_sets = []
    for job in ordered:
        candidates = [d for d in ranked if feasible(job, d)]
        if not candidates:
            raise InfeasibleJob(job.id)
        feasible_sets.append(candidates)

    # A greedy schedule bounds the search; ties at the bound are still
    # explored until the first full assignment claims it.
    bound = makespan(greedy_assign(jobs, devices), jobs, devices)
    best_map: Optional[dict[str, str]] = None
    best_m = bound
    loads = {d.name: Fraction(0) for d in ranked}
    chosen: dict[str, str] = {}

    def search(i: int, partial_max: Fraction) -> None:
        nonlocal best_map, best_m
        if i == len(ordered):
            if best_map is None or partial_max < best_m:
                best_map = dict(chosen)
                best_m = partial_max
            return
        job = ordered[i]
        for d in feasible_sets[i]:
            load = loads[d.name] + job.cost / d.speed_factor
            new_max = max(partial_max, load)
            if (best_map is None and new_max > bound) or (best_map is not None and new_max >= best_m):
                continue
            loads[d.name] = load
            chosen[job.id] = d.name
            search(i + 1, new_max)
            loads[d.name] -= job.cost / d.speed_factor
            del chosen[job.id]

    search(0, Fraction(0))
    assert best_map is not None  # greedy proved feasibility
    return Assignment({j.id: best_map[j.id] for j in ordered})


def render_value(x: Fraction) -> str:
    """Stable text for rational quantities: exact decimals when the
    denominator divides a power of ten, else the reduced fraction."""
    if x.denominator == 1:
        return str(x.numerator)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{x.numerator}/{x.denominator}"
    places = max(twos, fives)
    scaled = x.numerator * 10**places // x.denominator
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(places + 1, "0")
    return f"{sign}{digits[:-places]}.{digits[-places:]}"
