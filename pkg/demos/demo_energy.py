"""Energy cost of a benchmark run on each supported board.

Takes a recorded scaling run and converts wall time into cents using the
built-in full-load wattages and a residential electricity rate, the way an
operator would size a small always-on cluster.
"""

from taskbench.energy import (
    BUILTIN_PROFILES,
    DEFAULT_RATE_CENTS_PER_KWH,
    append_cost_section,
    cost_cents,
    cost_per_iteration,
)
from taskbench.heat1d import ScalingConfig, run_scaling

print(f"rate: {DEFAULT_RATE_CENTS_PER_KWH} cents/kWh")
print(f"sanity: 1000 W for one hour -> {cost_cents(1000, 3600):.2f} cents\n")

print("per-board full-load draw and cost of a hypothetical 100 s, 100-iteration run:")
for key, profile in BUILTIN_PROFILES.items():
    cr = cost_per_iteration(100.0, profile, iterations=100)
    print(f"  {profile.model_name:18s} {profile.watts:4.1f} W -> "
          f"{cr.total_cents:.3e} cents total, {cr.cents_per_iteration:.3e} cents/iteration")

print("\nattaching costs to a real desk-scale scaling report (pi4 profile):")
report = run_scaling(ScalingConfig(mode="strong", base_points=200_000,
                                   timesteps=100, node_counts=[1, 2, 4]))
data = append_cost_section(report, BUILTIN_PROFILES["pi4"])
for row in data["cost"]["rows"]:
    nodes = row["labels"]["nodes"]
    print(f"  {nodes} node(s): {row['total_cents']:.3e} cents total, "
          f"{row['cents_per_iteration']:.3e} cents/iteration "
          f"({row['kwh']:.3e} kWh)")
print("\n(multi-node rows charge node_count x watts for the full duration)")
