"""Uniform benchmark report record and its JSON / CSV / gnuplot emitters.

JSON is the source-of-truth format: keys are emitted sorted and floats with
17 significant digits, so parse -> re-emit is byte-identical and doubles
survive round trips exactly. CSV and dat are projections of the same rows;
dat files load in gnuplot with the plain `using 1:2` convention.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


def host_environment():
    """Describe the host the benchmark ran on (merged into every report)."""
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "cpu_count": os.cpu_count() or 1,
    }


@dataclass
class BenchReport:
    """One benchmark run: full config echo plus one row per sweep point.

    Rows are label/metric maps; a failed sweep point carries an `error`
    string instead of metrics so a partial sweep still emits. The config
    echo materializes every default (seeds included) so a run can be
    reproduced from the report alone.
    """

    benchmark: str
    config: dict
    environment: dict = field(default_factory=host_environment)
    rows: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def add_row(self, labels, metrics):
        """Append a successful row; metrics maps name -> (value, unit)."""
        self.rows.append(
            {
                "labels": dict(labels),
                "metrics": {
                    name: {"value": value, "unit": unit}
                    for name, (value, unit) in metrics.items()
                },
            }
        )

    def add_failure(self, labels, error):
        """Append a failed sweep point without aborting the report."""
        self.rows.append({"labels": dict(labels), "error": str(error)})

    def to_dict(self):
        return {
            "benchmark": self.benchmark,
            "config": self.config,
            "environment": self.environment,
            "rows": self.rows,
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            benchmark=data["benchmark"],
            config=data["config"],
            environment=data.get("environment", {}),
            rows=data.get("rows", []),
            schema_version=data.get("schema_version", SCHEMA_VERSION),
        )

    @property
    def sweep_key(self):
        """Label key of the primary sweep variable (first dat column)."""
        key = self.config.get("sweep")
        if key:
            return key
        for row in self.rows:
            labels = row.get("labels", {})
            if labels:
                return sorted(labels)[0]
        return None


def canonical_json(value):
    """Serialize to canonical JSON: sorted keys, floats at 17 sig. digits."""
    out = io.StringIO()
    _write_json(value, out)
    return out.getvalue()


def _write_json(value, out):
    if value is None:
        out.write("null")
    elif isinstance(value, bool):
        out.write("true" if value else "false")
    elif isinstance(value, int):
        out.write(str(value))
    elif isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("non-finite float is not representable in a report")
        out.write(format(value, ".17g"))
    elif isinstance(value, str):
        out.write(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, dict):
        out.write("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise TypeError(f"report keys must be strings, got {key!r}")
            if i:
                out.write(",")
            out.write(json.dumps(key, ensure_ascii=False))
            out.write(":")
            _write_json(value[key], out)
        out.write("}")
    elif isinstance(value, (list, tuple)):
        out.write("[")
        for i, item in enumerate(value):
            if i:
                out.write(",")
            _write_json(item, out)
        out.write("]")
    else:
        raise TypeError(f"unsupported report value type: {type(value).__name__}")


def _row_metric_value(row, name):
    metric = row.get("metrics", {}).get(name)
    return metric["value"] if metric is not None else None


def render_csv(report):
    label_keys = sorted({k for r in report.rows for k in r.get("labels", {})})
    metric_keys = sorted({k for r in report.rows for k in r.get("metrics", {})})
    has_error = any("error" in r for r in report.rows)

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = label_keys + metric_keys + (["error"] if has_error else [])
    writer.writerow(header)
    for row in report.rows:
        cells = [row.get("labels", {}).get(k, "") for k in label_keys]
        cells += [_row_metric_value(row, k) for k in metric_keys]
        if has_error:
            cells.append(row.get("error", ""))
        writer.writerow(["" if c is None else c for c in cells])
    return out.getvalue()


def render_dat(report):
    """Numeric columns for gnuplot: sweep variable first, then metrics."""
    sweep = report.sweep_key
    if sweep is None:
        raise ValueError("report has no rows to project into dat format")
    metric_keys = sorted({k for r in report.rows for k in r.get("metrics", {})})

    lines = ["# " + " ".join([sweep] + metric_keys)]
    for row in report.rows:
        sweep_value = row.get("labels", {}).get(sweep, "")
        if "error" in row:
            lines.append(f"# {sweep_value} failed: {row['error']}")
            continue
        cells = [sweep_value] + [_row_metric_value(row, k) for k in metric_keys]
        lines.append(" ".join(_dat_number(c) for c in cells))
    return "\n".join(lines) + "\n"


def _dat_number(value):
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    raise ValueError(f"dat columns must be numeric, got {value!r}")


def emit_report(report, fmt, path):
    """Write `report` to `path` as json, csv, or dat."""
    if fmt == "json":
        text = canonical_json(report.to_dict()) + "\n"
    elif fmt == "csv":
        text = render_csv(report)
    elif fmt == "dat":
        text = render_dat(report)
    else:
        raise ValueError(f"unknown report format: {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_report(path):
    with open(path, "r", encoding="utf-8") as fh:
        return BenchReport.from_dict(json.load(fh))
