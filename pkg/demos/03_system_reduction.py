#!/usr/bin/env python3
"""Reduce a cluster of multi-core CPUs with accelerators down to one
single-core CPU plus virtual printers.

Each rewrite step strips one property of the machine and virtualizes it
into a device descriptor; the residue always classifies as Type I, so
any supported machine programs like the simplest one.
"""

from upm.reducer import SystemSpec, classify, reduce_system

machine = SystemSpec(
    node_count=4,
    cores_per_cpu=8,
    accelerators=(("gpu", 2), ("fpga", 1)),
)

print("machine type:", classify(machine).value)
view, steps = reduce_system(machine)
for step in steps:
    names = ", ".join(d.name for d in step.virtualized)
    print(f"  {step.rule.value}: {step.before.value} -> {step.after.value}  [{names}]")
print("residual type:", classify(view.base).value)
print("virtual devices:", len(view.devices))
