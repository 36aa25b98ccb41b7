"""`bench` command line: dispatch, environment preflight, report emission.

Every subcommand materializes its full config (defaults included) into the
report it emits, runs the governor preflight first, and exits 0 on success,
1 on runtime failure, 2 on usage errors. BENCH_SEED overrides module seeds.
"""

from __future__ import annotations

import argparse
import glob
import os
import re
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import als, energy, heat1d, jacobi2d, membench, netlayer
from .report import BenchReport, canonical_json, emit_report
from .taskgraph import WorkerPool, wait_all

SYSFS_CPU_ROOT = "/sys/devices/system/cpu"


@dataclass
class PreflightResult:
    governors: dict = field(default_factory=dict)  # cpu name -> governor text
    warnings: list = field(default_factory=list)

    @property
    def available(self):
        return bool(self.governors)


def preflight(sysfs_root=SYSFS_CPU_ROOT):
    """Read per-CPU frequency governors; warn on anything but 'performance'.

    Hosts without the sysfs files (non-Linux, containers) degrade to
    'unavailable' with no warnings.
    """
    result = PreflightResult()
    pattern = os.path.join(sysfs_root, "cpu*", "cpufreq", "scaling_governor")
    for path in sorted(glob.glob(pattern)):
        match = re.search(r"(cpu\d+)", path)
        name = match.group(1) if match else path
        try:
            with open(path) as fh:
                governor = fh.read().strip()
        except OSError:
            continue
        result.governors[name] = governor
        if governor != "performance":
            result.warnings.append(
                f"{name} governor is '{governor}'; set 'performance' for stable timing"
            )
    return result


def _parse_int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _seed_override(default):
    env = os.environ.get("BENCH_SEED")
    if env is None:
        return default
    try:
        return int(env)
    except ValueError:
        raise SystemExit(f"BENCH_SEED must be an integer, got {env!r}")


def _finish(report, args, pf):
    report.environment["governors"] = pf.governors if pf.available else "unavailable"
    report.environment["governor_warnings"] = list(pf.warnings)
    if args.output:
        emit_report(report, args.format, args.output)
    else:
        if args.format == "json":
            sys.stdout.write(canonical_json(report.to_dict()) + "\n")
        else:
            from .report import render_csv, render_dat

            render = render_csv if args.format == "csv" else render_dat
            sys.stdout.write(render(report))
    return 0


def _add_output_flags(sub):
    sub.add_argument("--output", help="write the report here instead of stdout")
    sub.add_argument("--format", choices=["json", "csv", "dat"], default="json")


def _cmd_stream(args, pf):
    cfg = membench.StreamConfig(
        n_elements=args.elements,
        n_trials=args.trials,
        core_counts=args.cores,
        seed=_seed_override(membench.StreamConfig.seed),
    )
    result = membench.run_stream(cfg)
    a, b, c = result.arrays
    err = membench.validate_stream(a, b, c, cfg)
    if err >= 1e-13:
        print(f"stream validation FAILED: max relative error {err:.3e}", file=sys.stderr)
        return 1
    print(f"stream validation ok: max relative error {err:.3e}", file=sys.stderr)
    return _finish(result.to_report(cfg), args, pf)


def _cmd_jacobi2d(args, pf):
    cfg = jacobi2d.JacobiConfig(
        rows=args.rows,
        cols=args.cols,
        timesteps=args.steps,
        kernel=args.kernel,
        precision={"f32": "single", "f64": "double"}[args.precision],
        core_counts=args.cores,
        strips=args.strips,
        width=args.width,
        seed=_seed_override(jacobi2d.JacobiConfig.seed),
    )
    if args.bandwidth is not None:
        bandwidth = {c: args.bandwidth for c in cfg.core_counts}
    else:
        scfg = membench.StreamConfig(
            n_elements=args.stream_elements,
            n_trials=args.stream_trials,
            core_counts=cfg.core_counts,
            seed=cfg.seed,
        )
        bandwidth = membench.run_stream(scfg).best_bandwidth
    result = jacobi2d.run_jacobi(cfg)
    return _finish(jacobi2d.jacobi_report(cfg, result, bandwidth), args, pf)


def _cmd_heat1d(args, pf):
    seed = _seed_override(None)
    if args.transport == "tcp":
        return _heat_tcp_rank(args, pf, seed)
    cfg = heat1d.ScalingConfig(
        mode=args.mode,
        base_points=args.points,
        timesteps=args.steps,
        node_counts=args.nodes,
        threads_per_node=args.threads_per_node,
        transport="inproc",
        seed=seed,
    )
    report = heat1d.run_scaling(cfg)
    return _finish(report, args, pf)


def _heat_tcp_rank(args, pf, seed):
    """One locality of a multi-process TCP run; rank = index of --listen."""
    if not args.peers or not args.listen:
        print("tcp transport needs --listen and --peers", file=sys.stderr)
        return 2
    peers = [p.strip() for p in args.peers.split(",") if p.strip()]
    if args.listen not in peers:
        print(f"--listen {args.listen} does not appear in --peers", file=sys.stderr)
        return 2
    rank = peers.index(args.listen)
    n_ranks = len(peers)
    shapes = heat1d.partition_global(args.points, n_ranks)
    _, start, size = shapes[rank]
    if seed is None:
        u_local = (np.arange(start, start + size, dtype=np.int64) % 10).astype(np.float64)
    else:
        u_local = heat1d.default_field(args.points, seed)[start : start + size].copy()
    params = heat1d.HeatParams()
    link = netlayer.establish_ring(peers, rank=rank, transport="tcp")
    pool = WorkerPool(args.threads_per_node)
    try:
        part = heat1d.Partition1D(rank=rank, start=start, local=u_local)
        t0 = time.perf_counter()
        fut = heat1d.run_locality(part, params, args.steps, link, pool, args.threads_per_node)
        final = wait_all([fut])[0]
        elapsed = time.perf_counter() - t0
    finally:
        pool.shutdown()
        link.close()
    if args.dump_field:
        np.save(args.dump_field, final)
    report = BenchReport(
        benchmark="heat1d",
        config={
            "mode": "distributed",
            "points": args.points,
            "timesteps": args.steps,
            "transport": "tcp",
            "rank": rank,
            "peers": peers,
            "threads_per_node": args.threads_per_node,
            "seed": seed,
            "sweep": "nodes",
        },
    )
    report.add_row(
        labels={"nodes": n_ranks, "rank": rank, "threads_per_node": args.threads_per_node},
        metrics={
            "elapsed": (elapsed, "s"),
            "points": (args.points, "cells"),
            "local_checksum": (float(np.sum(final)), ""),
        },
    )
    return _finish(report, args, pf)


def _cmd_als(args, pf):
    cfg = als.AlsConfig(
        ratings_path=args.ratings,
        max_lines=args.max_lines,
        k=args.k,
        lam=getattr(args, "lambda"),
        n_sweeps=args.sweeps,
        core_counts=args.cores,
        seed=_seed_override(als.AlsConfig.seed),
    )
    R = als.load_ratings(cfg.ratings_path, cfg.max_lines)
    print(
        f"loaded {R.n_observations} ratings ({R.n_users} users x {R.n_items} items, "
        f"{R.duplicate_count} duplicates resolved last-wins)",
        file=sys.stderr,
    )
    return _finish(als.run_als_benchmark(R, cfg), args, pf)


def _cmd_energy(args, pf):
    from .report import load_report

    if args.profile == "custom":
        if args.watts is None:
            print("--profile custom needs --watts", file=sys.stderr)
            return 2
        profile = energy.PowerProfile("custom", args.watts)
    else:
        profile = energy.BUILTIN_PROFILES[args.profile]
        if args.watts is not None:
            profile = energy.PowerProfile(profile.model_name, args.watts)
    report = load_report(args.report)
    data = energy.append_cost_section(report, profile, args.rate, args.iterations)
    text = canonical_json(data) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bench", description="task-based performance benchmark suite"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stream", help="TRIAD memory bandwidth per core count")
    p.add_argument("--elements", type=int, default=membench.DEFAULT_ELEMENTS)
    p.add_argument("--trials", type=int, default=membench.DEFAULT_TRIALS)
    p.add_argument("--cores", type=_parse_int_list, default=membench._default_core_counts())
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_stream)

    p = sub.add_parser("jacobi2d", help="2D Jacobi stencil strong scaling")
    p.add_argument("--rows", type=int, default=4096)
    p.add_argument("--cols", type=int, default=4096)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--kernel", choices=["scalar", "vector"], default="scalar")
    p.add_argument("--precision", choices=["f32", "f64"], default="f64")
    p.add_argument("--cores", type=_parse_int_list, default=membench._default_core_counts())
    p.add_argument("--strips", type=int, default=None, help="tasks per step (default: core count)")
    p.add_argument("--width", type=int, default=None, help="SIMD lanes for the vector kernel")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="bytes/s for the roofline ceiling; skips the built-in probe")
    p.add_argument("--stream-elements", type=int, default=membench.DEFAULT_ELEMENTS)
    p.add_argument("--stream-trials", type=int, default=3)
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_jacobi2d)

    p = sub.add_parser("heat1d", help="distributed 1D heat equation scaling")
    p.add_argument("--points", type=int, default=1_000_000)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--nodes", type=_parse_int_list, default=[1, 2, 3, 4])
    p.add_argument("--threads-per-node", type=int, default=1)
    p.add_argument("--mode", choices=["strong", "weak"], default="strong")
    p.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    p.add_argument("--listen", help="HOST:PORT of this rank (tcp transport)")
    p.add_argument("--peers", help="comma-separated HOST:PORT of every rank (tcp)")
    p.add_argument("--dump-field", help="write this rank's final field as .npy")
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_heat1d)

    p = sub.add_parser("als", help="alternating least squares benchmark")
    p.add_argument("--ratings", required=True)
    p.add_argument("--max-lines", type=int, default=als.DEFAULT_MAX_LINES)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--lambda", type=float, default=0.1)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--cores", type=_parse_int_list, default=[1])
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_als)

    p = sub.add_parser("energy", help="convert a report's runtimes into cost")
    p.add_argument("--report", required=True, help="BenchReport JSON file")
    p.add_argument("--profile", choices=[*energy.BUILTIN_PROFILES, "custom"], default="pi4")
    p.add_argument("--watts", type=float, default=None)
    p.add_argument("--rate", type=float, default=energy.DEFAULT_RATE_CENTS_PER_KWH)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--output")
    p.set_defaults(fn=_cmd_energy)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    pf = preflight()
    for warning in pf.warnings:
        print(f"preflight: {warning}", file=sys.stderr)
    try:
        return args.fn(args, pf)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"bench {args.command}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
