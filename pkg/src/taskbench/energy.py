"""Operating-cost model: watts and wall time to cents on the power bill.

Built-in wattages are full-load (all four cores stressed) figures for the
three boards this toolkit targets; the boards expose no hardware power
counters, so a constant full-load draw is assumed regardless of how many
threads a run actually used.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_RATE_CENTS_PER_KWH = 8.2

WATT_SECONDS_PER_KWH = 3_600_000.0


@dataclass(frozen=True)
class PowerProfile:
    model_name: str
    watts: float

    def __post_init__(self):
        if self.watts <= 0:
            raise ValueError("watts must be positive")


# Full-load draw per board model (stress on all four cores).
BUILTIN_PROFILES = {
    "pi3b": PowerProfile("Raspberry Pi 3B", 3.7),
    "pi3bplus": PowerProfile("Raspberry Pi 3B+", 5.1),
    "pi4": PowerProfile("Raspberry Pi 4", 6.4),
}


@dataclass
class CostReport:
    total_cents: float
    cents_per_iteration: float
    kwh: float
    rate_cents_per_kwh: float = DEFAULT_RATE_CENTS_PER_KWH


def cost_cents(watts, seconds, rate_cents_per_kwh=DEFAULT_RATE_CENTS_PER_KWH):
    """watts * seconds / 3.6e6 * rate."""
    if watts < 0 or seconds < 0 or rate_cents_per_kwh < 0:
        raise ValueError("watts, seconds and rate must be non-negative")
    return watts * seconds / WATT_SECONDS_PER_KWH * rate_cents_per_kwh


def cost_per_iteration(elapsed_seconds, profile, iterations, n_nodes=1,
                       rate_cents_per_kwh=DEFAULT_RATE_CENTS_PER_KWH):
    """Cost of a run and its per-iteration share; multi-node runs draw
    n_nodes * watts for the full duration."""
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if elapsed_seconds is None:
        raise ValueError("run has no elapsed time")
    watts = profile.watts * n_nodes
    kwh = watts * elapsed_seconds / WATT_SECONDS_PER_KWH
    total = kwh * rate_cents_per_kwh
    return CostReport(
        total_cents=total,
        cents_per_iteration=total / iterations,
        kwh=kwh,
        rate_cents_per_kwh=rate_cents_per_kwh,
    )


def append_cost_section(report, profile, rate_cents_per_kwh=DEFAULT_RATE_CENTS_PER_KWH,
                        iterations=None):
    """Attach a cost entry per successful row of a BenchReport.

    The iteration count defaults to the run's timesteps/sweeps echo when the
    report has one; the node count comes from each row's labels.
    """
    if iterations is None:
        iterations = (
            report.config.get("timesteps")
            or report.config.get("n_sweeps")
            or report.config.get("n_trials")
            or 1
        )
    costs = []
    for row in report.rows:
        if "error" in row:
            costs.append({"labels": dict(row["labels"]), "error": row["error"]})
            continue
        elapsed = row.get("metrics", {}).get("elapsed")
        if elapsed is None:
            raise ValueError("report row lacks an 'elapsed' metric")
        nodes = row["labels"].get("nodes", 1)
        cr = cost_per_iteration(
            elapsed["value"], profile, iterations, n_nodes=nodes,
            rate_cents_per_kwh=rate_cents_per_kwh,
        )
        costs.append(
            {
                "labels": dict(row["labels"]),
                "total_cents": cr.total_cents,
                "cents_per_iteration": cr.cents_per_iteration,
                "kwh": cr.kwh,
            }
        )
    data = report.to_dict()
    data["cost"] = {
        "profile": profile.model_name,
        "watts": profile.watts,
        "rate_cents_per_kwh": rate_cents_per_kwh,
        "iterations": iterations,
        "rows": costs,
    }
    return data
