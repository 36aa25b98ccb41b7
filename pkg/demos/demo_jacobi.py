"""2D Jacobi stencil: plain layout versus the lane-interleaved layout.

Shows that the vectorized kernel over the Virtual Node Scheme layout
reproduces the scalar kernel bit for bit, then runs a small strong-scaling
sweep and prints measured MLUPs next to the bandwidth-derived ceilings
under both traffic conventions.
"""

import numpy as np

from taskbench.jacobi2d import (
    Grid2D,
    JacobiConfig,
    expected_peak_conventions,
    jacobi_report,
    pack_vns,
    run_jacobi,
    step_scalar,
    step_vns,
    unpack_vns,
)
from taskbench.membench import StreamConfig, run_stream
from taskbench.report import render_dat

# --- bitwise equivalence of the two kernels --------------------------------
g = Grid2D.random(64, 66, "double", seed=42)
scalar_dst = g.copy()
step_scalar(g, scalar_dst)

v = pack_vns(g, width=2)  # lane w of group j' owns interior column w*L + j'
vns_dst = v.copy()
step_vns(v, vns_dst)

same = np.array_equal(unpack_vns(vns_dst).data, scalar_dst.data)
print(f"scalar kernel == unpack(vns kernel(pack)):  {same}  (0 ulp)")

# --- strong scaling sweep with roofline ceilings ----------------------------
cores = [1, 2]
print(f"\nprobing bandwidth for the ceiling (cores {cores})...")
bw = run_stream(StreamConfig(n_elements=2_000_000, n_trials=3, core_counts=cores)).best_bandwidth
for n in cores:
    peaks = expected_peak_conventions(bw[n], "double")
    print(f"  {n} core(s): {bw[n] / 1e9:.2f} GB/s -> ceiling "
          f"{peaks['write_allocate'] / 1e6:.0f} MLUP/s (24 B/LUP) or "
          f"{peaks['read_write'] / 1e6:.0f} MLUP/s (16 B/LUP)")

cfg = JacobiConfig(rows=512, cols=514, timesteps=50, kernel="vector", core_counts=cores)
result = run_jacobi(cfg)
for m in result.metrics:
    print(f"  measured {m.kernel} kernel, {m.core_count} core(s): "
          f"{m.mlups:.1f} MLUP/s ({m.mlups * 4:.1f} MFLOP/s) in {m.elapsed:.3f}s")

print("\njacobi dat projection (cores, measured, ceilings):")
print(render_dat(jacobi_report(cfg, result, bw)))
