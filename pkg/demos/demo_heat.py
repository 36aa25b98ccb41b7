"""Distributed 1D heat solver: decomposition invariance and scaling sweeps.

Partitions a periodic rod across localities that exchange single-cell halos
through futures, overlapping edge communication with interior computation.
The same run is repeated over the in-process transport and real loopback TCP
sockets, and both must match the sequential solver exactly.
"""

import numpy as np

from taskbench.heat1d import (
    HeatParams,
    ScalingConfig,
    default_field,
    run_heat_once,
    run_scaling,
    sequential_heat,
)
from taskbench.report import render_dat

params = HeatParams()  # k=0.5, dt=1, dx=1 -> coefficient 0.5
points, steps = 100_000, 100

u0 = default_field(points)  # u[i] = i mod 10
reference = sequential_heat(u0, params, steps)
print(f"{points:,} cells, {steps} steps, checksum {np.sum(reference):.6f}")

for transport in ("inproc", "tcp"):
    for localities in (1, 2, 4):
        out, elapsed = run_heat_once(u0, params, steps, localities, threads_per_node=2,
                                     transport=transport)
        exact = np.array_equal(out, reference)
        print(f"  {transport:6s} {localities} localities x 2 threads: "
              f"{elapsed:.3f}s  bitwise == sequential: {exact}")

print("\nstrong scaling (fixed 1M cells):")
strong = run_scaling(ScalingConfig(mode="strong", base_points=1_000_000,
                                   timesteps=100, node_counts=[1, 2, 3, 4]))
print(render_dat(strong))

print("weak scaling (1M cells per node):")
weak = run_scaling(ScalingConfig(mode="weak", base_points=1_000_000,
                                 timesteps=100, node_counts=[1, 2, 3, 4]))
print(render_dat(weak))
