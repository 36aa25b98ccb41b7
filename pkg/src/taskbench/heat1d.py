"""Distributed 1D heat solver with halo exchange overlapped via dataflow.

One partition per locality, periodic boundary (rank 0's left neighbor is the
last rank), one halo cell per side. Per step, a partition's interior depends
only on its own previous state and runs as soon as that is ready; each edge
cell is a separate dataflow node that additionally waits for the matching
halo future, so computation overlaps communication. New edge values are sent
the moment the owning sub-range finishes, tagged with the next step index.

Every code path (sequential reference, threaded sub-ranges, in-process and
TCP localities) applies the same update expression

    u' = u + (k*dt/dx^2) * ((left - 2*u) + right)

with identical association, so decompositions agree with the sequential
solver bit for bit, not just to tolerance.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .netlayer import InprocRing, loopback_ring
from .report import BenchReport
from .taskgraph import WorkerPool, dataflow, ready, then, wait_all


@dataclass
class HeatParams:
    k: float = 0.5
    dt: float = 1.0
    dx: float = 1.0

    def __post_init__(self):
        if self.coef > 0.5:
            warnings.warn(
                f"k*dt/dx^2 = {self.coef} exceeds 0.5; the explicit update is unstable",
                stacklevel=2,
            )

    @property
    def coef(self):
        return self.k * self.dt / (self.dx * self.dx)


def heat_update(left, mid, right, params):
    """Single-cell update; the one formula every path agrees on."""
    return mid + params.coef * ((left - 2.0 * mid) + right)


def _update_slice(src, dst, lo, hi, coef):
    # cells lo..hi-1 whose neighbors are all inside src
    dst[lo:hi] = src[lo:hi] + coef * ((src[lo - 1 : hi - 1] - 2.0 * src[lo:hi]) + src[lo + 1 : hi + 1])


def _halo_value(payload):
    # halo futures may carry a bare float or a one-cell array
    return payload[0] if np.ndim(payload) else payload


def default_field(n_points, seed=None):
    """u[i] = i mod 10 by default; a seeded uniform field when asked."""
    if seed is None:
        return (np.arange(n_points, dtype=np.int64) % 10).astype(np.float64)
    return np.random.default_rng(seed).random(n_points)


def sequential_heat(u0, params, timesteps):
    """Reference solver: full field, periodic, two buffers."""
    coef = params.coef
    cur = np.array(u0, dtype=np.float64, copy=True)
    nxt = np.empty_like(cur)
    n = len(cur)
    for _ in range(timesteps):
        if n > 2:
            _update_slice(cur, nxt, 1, n - 1, coef)
        nxt[0] = heat_update(cur[-1], cur[0], cur[1 % n], params)
        if n > 1:
            nxt[-1] = heat_update(cur[-2], cur[-1], cur[0], params)
        cur, nxt = nxt, cur
    return cur


@dataclass
class Partition1D:
    """One locality's contiguous slice of the global field."""

    rank: int
    start: int
    local: np.ndarray
    left_halo: float = None
    right_halo: float = None

    @property
    def n_local(self):
        return len(self.local)


def partition_global(n_global, n_localities):
    """Contiguous block shapes (rank, start, size); sizes differ by <= 1."""
    if n_localities < 1:
        raise ValueError("need at least one locality")
    if n_localities > n_global:
        raise ValueError(f"{n_localities} localities for {n_global} points")
    base, rem = divmod(n_global, n_localities)
    shapes = []
    start = 0
    for rank in range(n_localities):
        size = base + (1 if rank < rem else 0)
        shapes.append((rank, start, size))
        start += size
    return shapes


def _sub_ranges(n_local, n_threads):
    n_threads = max(1, min(n_threads, n_local))
    base, rem = divmod(n_local, n_threads)
    bounds = []
    lo = 0
    for i in range(n_threads):
        size = base + (1 if i < rem else 0)
        bounds.append((lo, lo + size))
        lo += size
    return bounds


class _LocalityRun:
    """Builds the per-step task graph for one partition.

    Sub-ranges synchronize in-process like stencil strips; the first/last
    cells are dataflow nodes keyed on the halo futures from `link`.
    """

    def __init__(self, partition, params, timesteps, link, pool, n_threads):
        self.part = partition
        self.params = params
        self.coef = params.coef
        self.timesteps = timesteps
        self.link = link
        self.pool = pool
        self.bufs = [partition.local, np.empty_like(partition.local)]
        self.bounds = _sub_ranges(partition.n_local, n_threads)

    def start(self):
        """Send step-0 edges and wire all steps; future of the final array."""
        cur = self.bufs[0]
        sends = [
            self.link.send_halo("left", 0, [cur[0]]),
            self.link.send_halo("right", 0, [cur[-1]]),
        ]
        blocks = [ready(None)] * len(self.bounds)
        for t in range(self.timesteps):
            left_halo = self.link.halo_future("left", t)
            right_halo = self.link.halo_future("right", t)
            blocks, edge_sends = self._wire_step(
                t % 2, blocks, left_halo, right_halo, t + 1, self.link.send_halo
            )
            sends.extend(edge_sends)
        done = dataflow(blocks + sends, lambda *_: None)
        final = self.bufs[self.timesteps % 2]
        return then(done, lambda _: final)

    def _wire_step(self, parity, prev, left_halo, right_halo, send_tag, send):
        """Wire one step reading bufs[parity], writing bufs[1 - parity].

        New edge cells go out through `send` tagged `send_tag` as soon as the
        owning sub-range completes.
        """
        src = self.bufs[parity]
        dst = self.bufs[1 - parity]
        n = self.part.n_local
        nb = len(self.bounds)
        pool = self.pool
        params = self.params

        cur = []
        sends = []
        for b, (lo, hi) in enumerate(self.bounds):
            deps = [prev[b]]
            if b > 0:
                deps.append(prev[b - 1])
            if b < nb - 1:
                deps.append(prev[b + 1])
            first = b == 0
            last = b == nb - 1
            if first:
                deps.append(left_halo)
            if last:
                deps.append(right_halo)

            def block(*_ignored, lo=lo, hi=hi, first=first, last=last):
                in_lo = lo + 1 if first else lo
                in_hi = hi - 1 if last else hi
                if in_lo < in_hi:
                    _update_slice(src, dst, in_lo, in_hi, self.coef)
                if first:
                    lh = _halo_value(left_halo._value)
                    self.part.left_halo = float(lh)
                    right_of_first = src[1] if n > 1 else _halo_value(right_halo._value)
                    dst[0] = heat_update(lh, src[0], right_of_first, params)
                if last and n > 1:
                    rh = _halo_value(right_halo._value)
                    self.part.right_halo = float(rh)
                    dst[n - 1] = heat_update(src[n - 2], src[n - 1], rh, params)

            fut = dataflow(deps, block, pool=pool)
            cur.append(fut)
            if first:
                sends.append(then(fut, lambda _, dst=dst: send("left", send_tag, [dst[0]])))
            if last:
                sends.append(then(fut, lambda _, dst=dst: send("right", send_tag, [dst[n - 1]])))
        # a failed send must fail the run, so unwrap the nested futures
        sends = [dataflow([s], lambda inner: inner.wait()) for s in sends]
        return cur, sends


def step_partition(partition, left_halo, right_halo, params, pool=None, link=None, step=0, n_threads=1):
    """One step of one partition, driven by halo futures.

    Interior cells start as soon as the previous state allows; each edge
    cell waits only for its own halo future. Returns a future of the updated
    Partition1D. When `link` is given, the new edge cells are sent to the
    neighbors tagged `step + 1` as soon as the owning sub-range completes.
    """

    def send(neighbor, tag, cells):
        if link is None:
            return ready(None)
        return link.send_halo(neighbor, tag, cells)

    run = _LocalityRun(partition, params, 1, link, pool, n_threads)
    blocks = [ready(None)] * len(run.bounds)
    blocks, sends = run._wire_step(0, blocks, left_halo, right_halo, step + 1, send)
    done = dataflow(blocks + sends, lambda *_: None)

    def finish(_):
        partition.local = run.bufs[1]
        return partition

    return then(done, finish)


def run_locality(partition, params, timesteps, link, pool, n_threads=1):
    """Drive one locality's partition for `timesteps`; future of final array."""
    return _LocalityRun(partition, params, timesteps, link, pool, n_threads).start()


def run_heat_once(u0, params, timesteps, n_localities, threads_per_node=1, transport="inproc"):
    """Run the partitioned solver in-process; (final global field, seconds).

    transport 'inproc' wires localities through shared channels; 'tcp' runs
    the same localities over loopback sockets with the framed protocol.
    """
    n = len(u0)
    shapes = partition_global(n, n_localities)
    if transport == "inproc":
        links = InprocRing(n_localities).localities()
    elif transport == "tcp":
        links = loopback_ring(n_localities)
    else:
        raise ValueError(f"unknown transport {transport!r}")

    pools = [WorkerPool(threads_per_node) for _ in range(n_localities)]
    parts = [
        Partition1D(rank=r, start=s, local=np.array(u0[s : s + size], copy=True))
        for r, s, size in shapes
    ]
    try:
        t0 = time.perf_counter()
        finals = [
            run_locality(parts[r], params, timesteps, links[r], pools[r], threads_per_node)
            for r in range(n_localities)
        ]
        locals_ = wait_all(finals)
        elapsed = time.perf_counter() - t0
    finally:
        for p in pools:
            p.shutdown()
        for link in links:
            link.close()
    out = np.concatenate(locals_) if n_localities > 1 else locals_[0].copy()
    return out, elapsed


@dataclass
class ScalingConfig:
    mode: str = "strong"  # fixed total points vs fixed points per node
    base_points: int = 1_000_000
    timesteps: int = 100
    node_counts: list = field(default_factory=lambda: [1, 2, 3, 4])
    threads_per_node: int = 1
    transport: str = "inproc"
    seed: int = None  # None keeps the i mod 10 default field

    def __post_init__(self):
        if self.mode not in ("strong", "weak"):
            raise ValueError("mode must be 'strong' or 'weak'")

    def points_at(self, nodes):
        return self.base_points * nodes if self.mode == "weak" else self.base_points

    def to_dict(self):
        return {
            "mode": self.mode,
            "base_points": self.base_points,
            "timesteps": self.timesteps,
            "node_counts": list(self.node_counts),
            "threads_per_node": self.threads_per_node,
            "transport": self.transport,
            "seed": self.seed,
            "sweep": "nodes",
        }


def run_scaling(cfg, params=None):
    """Strong/weak sweep over node counts; failures become report rows."""
    params = params or HeatParams()
    report = BenchReport(benchmark="heat1d", config=cfg.to_dict())
    for nodes in cfg.node_counts:
        points = cfg.points_at(nodes)
        labels = {"nodes": nodes, "threads_per_node": cfg.threads_per_node}
        try:
            u0 = default_field(points, cfg.seed)
            final, elapsed = run_heat_once(
                u0, params, cfg.timesteps, nodes, cfg.threads_per_node, cfg.transport
            )
            checksum = float(np.sum(final))
        except MemoryError as err:
            report.add_failure(labels, f"out of memory at {points} points: {err}")
            continue
        report.add_row(
            labels=labels,
            metrics={
                "elapsed": (elapsed, "s"),
                "points": (points, "cells"),
                "checksum": (checksum, ""),
            },
        )
    return report
