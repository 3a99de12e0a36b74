"""Assignment tests against an in-test exhaustive oracle."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest

from upm.errors import InfeasibleJob, InvalidSpec
from upm.model import DeviceClass, DeviceDescriptor
from upm.scheduler import (
    Assignment,
    JobSpec,
    feasible,
    greedy_assign,
    makespan,
    optimal_assign,
    parse_jobs,
    render_value,
)


def device(name, speed=1, model="echo", languages=("kernelset-v1",)):
    return DeviceDescriptor(
        name=name,
        device_class=DeviceClass.ECHO,
        model_id=model,
        languages=frozenset(languages),
        speed_factor=Fraction(speed),
    )


def job(job_id, cost, model="echo", language="kernelset-v1"):
    return JobSpec(job_id, model, language, Fraction(cost))


def oracle_optimal(jobs, devices):
    """Plain enumeration over all feasible mappings; first strictly-better
    makespan wins, which is the lexicographic minimum among optima."""
    ordered = sorted(jobs, key=lambda j: j.id)
    ranked = sorted(devices, key=lambda d: d.name)
    choices = []
    for j in ordered:
        options = [d for d in ranked if feasible(j, d)]
        if not options:
            raise InfeasibleJob(j.id)
        choices.append(options)
    best_map, best_m = None, None
    for combo in itertools.product(*choices):
        loads: dict[str, Fraction] = {}
        for j, d in zip(ordered, combo):
            loads[d.name] = loads.get(d.name, Fraction(0)) + j.cost / d.speed_factor
        m = max(loads.values())
        if best_m is None or m < best_m:
            best_map, best_m = {j.id: d.name for j, d in zip(ordered, combo)}, m
    return Assignment(best_map), best_m


def test_feasible_matches_language_and_model():
    assert feasible(job("j", 1), device("d"))
    assert not feasible(job("j", 1, language="cuda"), device("d"))
    assert not feasible(job("j", 1, model="vecsum64"), device("d", model="echo"))
    assert feasible(job("j", 1, model="vecsum64"), device("d", model="kernelset-v1"))


def test_feasibility_filter_preserves_device_order():
    devices = [device("b"), device("a", model="kernelset-v1"), device("c")]
    j = job("j", 1)
    assert [d.name for d in devices if feasible(j, d)] == ["b", "a", "c"]


def test_greedy_lpt_example():
    # Oracle over all 8 mappings confirms optimum 5; LPT attains it.
    jobs = [job("j1", 4), job("j2", 3), job("j3", 2)]
    devices = [device("d1"), device("d2")]
    assignment = greedy_assign(jobs, devices)
    assert makespan(assignment, jobs, devices) == 5
    _, oracle_m = oracle_optimal(jobs, devices)
    assert oracle_m == 5


def test_single_job_goes_to_its_device():
    jobs = [job("only", 6)]
    devices = [device("d", speed=2)]
    assignment = greedy_assign(jobs, devices)
    assert assignment.mapping == {"only": "d"}
    assert makespan(assignment, jobs, devices) == 3


def test_unknown_language_is_infeasible():
    with pytest.raises(InfeasibleJob) as err:
        greedy_assign([job("j9", 1, language="cuda")], [device("d")])
    assert err.value.detail == "j9"
    with pytest.raises(InfeasibleJob):
        optimal_assign([job("j9", 1, language="cuda")], [device("d")])


def test_optimal_single_job_equals_greedy():
    jobs = [job("j", 5)]
    devices = [device("a"), device("b", speed=2)]
    assert optimal_assign(jobs, devices).mapping == greedy_assign(jobs, devices).mapping


def test_optimal_on_heterogeneous_speeds():
    # Brute force over 4 mappings: best makespan is 6 (oracle-checked),
    # attained by several mappings; lexicographic tie-break picks d1 for j1.
    jobs = [job("j1", 6), job("j2", 6)]
    devices = [device("d1", speed=1), device("d2", speed=2)]
    oracle_map, oracle_m = oracle_optimal(jobs, devices)
    assert oracle_m == 6
    result = optimal_assign(jobs, devices)
    assert result.mapping == oracle_map.mapping == {"j1": "d1", "j2": "d2"}
    assert makespan(result, jobs, devices) == 6


def test_optimal_guard_rejects_large_instances():
    jobs = [job(f"j{i:02}", 1) for i in range(13)]
    with pytest.raises(InvalidSpec) as err:
        optimal_assign(jobs, [device("d")])
    assert err.value.detail == "size"
    with pytest.raises(InvalidSpec):
        optimal_assign([job("j", 1)], [device(f"d{i}") for i in range(5)])


def test_makespan_examples():
    assert makespan(Assignment({}), [], [device("d")]) == 0
    jobs = [job("j", 4)]
    devices = [device("d", speed=2)]
    assert makespan(Assignment({"j": "d"}), jobs, devices) == 2


def _random_instance(rng):
    n_devices = rng.randrange(1, 4)
    devices = [
        device(
            f"d{i}",
            speed=Fraction(rng.randrange(1, 5), rng.randrange(1, 3)),
            model=rng.choice(["echo", "kernelset-v1"]),
        )
        for i in range(n_devices)
    ]
    jobs = [
        job(
            f"j{i}",
            Fraction(rng.randrange(1, 20), rng.randrange(1, 4)),
            model=rng.choice(["echo", "sortu32"]),
        )
        for i in range(rng.randrange(1, 7))
    ]
    return jobs, devices


def test_optimal_matches_oracle_randomized():
    rng = random.Random(99)
    compared = 0
    for _ in range(200):
        jobs, devices = _random_instance(rng)
        try:
            expected_map, expected_m = oracle_optimal(jobs, devices)
        except InfeasibleJob:
            with pytest.raises(InfeasibleJob):
                optimal_assign(jobs, devices)
            continue
        result = optimal_assign(jobs, devices)
        assert result.mapping == expected_map.mapping
        assert makespan(result, jobs, devices) == expected_m
        compared += 1
    assert compared >= 100


def test_greedy_never_beats_optimal_and_bounded_on_identical():
    rng = random.Random(123)
    for _ in range(200):
        jobs = [job(f"j{i}", Fraction(rng.randrange(1, 30))) for i in range(rng.randrange(1, 7))]
        devices = [device(f"d{i}") for i in range(rng.randrange(1, 4))]
        greedy_m = makespan(greedy_assign(jobs, devices), jobs, devices)
        _, optimal_m = oracle_optimal(jobs, devices)
        assert greedy_m >= optimal_m
        assert greedy_m <= 2 * optimal_m  # identical speeds: LPT bound holds


def test_cost_scaling_leaves_assignments_unchanged():
    rng = random.Random(7)
    for _ in range(50):
        jobs, devices = _random_instance(rng)
        try:
            base_greedy = greedy_assign(jobs, devices)
            base_optimal = optimal_assign(jobs, devices)
        except InfeasibleJob:
            continue
        for factor in (Fraction(3), Fraction(1, 7), Fraction(250, 3)):
            scaled = [JobSpec(j.id, j.model_id, j.language, j.cost * factor) for j in jobs]
            assert greedy_assign(scaled, devices).mapping == base_greedy.mapping
            assert optimal_assign(scaled, devices).mapping == base_optimal.mapping


def test_determinism_across_input_order():
    rng = random.Random(31)
    jobs, devices = _random_instance(rng)
    jobs = jobs * 1
    shuffled_jobs = jobs[::-1]
    shuffled_devices = devices[::-1]
    try:
        a = greedy_assign(jobs, devices).mapping
        b = greedy_assign(shuffled_jobs, shuffled_devices).mapping
        assert a == b
        assert optimal_assign(jobs, devices).mapping == optimal_assign(
            shuffled_jobs, shuffled_devices
        ).mapping
    except InfeasibleJob:
        pytest.skip("instance infeasible")


def test_parse_jobs_strict():
    parsed = parse_jobs(
        [{"id": "a", "model_id": "echo", "language": "kernelset-v1", "cost": 1.5}]
    )
    assert parsed == [JobSpec("a", "echo", "kernelset-v1", Fraction(3, 2))]
    for bad in (
        "nope",
        [{"id": "a", "model_id": "m", "language": "l"}],
        [{"id": "a", "model_id": "m", "language": "l", "cost": 0}],
        [{"id": "a", "model_id": "m", "language": "l", "cost": 1, "extra": 2}],
        [
            {"id": "a", "model_id": "m", "language": "l", "cost": 1},
            {"id": "a", "model_id": "m", "language": "l", "cost": 2},
        ],
    ):
        with pytest.raises(InvalidSpec):
            parse_jobs(bad)


@pytest.mark.parametrize(
    "value,text",
    [
        (Fraction(5), "5"),
        (Fraction(9, 2), "4.5"),
        (Fraction(1, 10), "0.1"),
        (Fraction(-7, 4), "-1.75"),
        (Fraction(1, 3), "1/3"),
    ],
)
def test_render_value_stable(value, text):
    assert render_value(value) == text
