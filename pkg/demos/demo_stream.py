"""TRIAD bandwidth probe at desk scale.

Runs a[i] = b[i] + q*c[i] over 2M doubles per core count, validates the
result arrays, and writes a gnuplot-ready dat file of core count versus
best-of-trials bandwidth.
"""

import os

from taskbench.membench import StreamConfig, run_stream, validate_stream
from taskbench.report import emit_report, render_dat

cores = list(range(1, (os.cpu_count() or 1) + 1))
cfg = StreamConfig(n_elements=2_000_000, n_trials=5, core_counts=cores)
print(f"TRIAD over {cfg.n_elements:,} doubles, trials={cfg.n_trials}, cores={cores}")
print(f"traffic accounting: {3 * 8 * cfg.n_elements:,} bytes per sweep "
      "(read b, read c, write a)")

result = run_stream(cfg)

a, b, c = result.arrays
print(f"self-check max relative error: {validate_stream(a, b, c, cfg):.3e}")

for n in cores:
    best = result.best_bandwidth[n]
    trials = ", ".join(f"{t / 1e9:.2f}" for t in result.all_trials[n])
    print(f"  {n} core(s): best {best / 1e9:6.2f} GB/s   (trials: {trials})")

report = result.to_report(cfg)
emit_report(report, "dat", "stream.dat")
print("\nstream.dat:")
print(render_dat(report))
