#!/usr/bin/env python3
"""Place a job batch on compatible devices to minimize makespan.

The greedy placer handles any batch size; the exhaustive one is exact
on small instances and doubles as its quality check here.
"""

from fractions import Fraction

from upm.model import DeviceClass, DeviceDescriptor
from upm.scheduler import (
    JobSpec,
    greedy_assign,
    makespan,
    optimal_assign,
    render_value,
)

devices = [
    DeviceDescriptor("slow-pool", DeviceClass.MULTICORE, "kernelset-v1",
                     frozenset({"kernelset-v1"}), Fraction(1)),
    DeviceDescriptor("fast-pool", DeviceClass.MULTICORE, "kernelset-v1",
                     frozenset({"kernelset-v1"}), Fraction(3)),
]

jobs = [
    JobSpec("render", "sortu32", "kernelset-v1", Fraction(12)),
    JobSpec("stats", "vecsum64", "kernelset-v1", Fraction(7)),
    JobSpec("index", "sortu32", "kernelset-v1", Fraction(5)),
    JobSpec("count", "wordcount", "kernelset-v1", Fraction(2)),
]

for label, assign in (("greedy", greedy_assign), ("optimal", optimal_assign)):
    assignment = assign(jobs, devices)
    print(f"{label}:")
    for job in jobs:
        print(f"  {job.id} -> {assignment.mapping[job.id]}")
    print("  makespan =", render_value(makespan(assignment, jobs, devices)))
