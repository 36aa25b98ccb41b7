"""STREAM TRIAD memory-bandwidth probe.

Measures sustainable bandwidth per core count by running a[i] = b[i] + q*c[i]
over contiguous blocks, one block per worker. The inner loop is a compiled
single-pass kernel (three memory streams, GIL released) so the timing
reflects memory traffic rather than interpreter overhead. Reported bytes per
sweep follow the STREAM convention: 3 * element-size * n_elements, with
write-allocate traffic deliberately not counted.
"""

from __future__ import annotations

import glob
import threading
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .report import BenchReport
from .taskgraph import WorkerPool, spawn, wait_all

DEFAULT_ELEMENTS = 10_000_000
DEFAULT_TRIALS = 10
# Canonical STREAM scalar.
DEFAULT_Q = 3.0


def _default_core_counts():
    import os

    return list(range(1, (os.cpu_count() or 1) + 1))


@dataclass
class StreamConfig:
    n_elements: int = DEFAULT_ELEMENTS
    n_trials: int = DEFAULT_TRIALS
    scalar_q: float = DEFAULT_Q
    core_counts: list = field(default_factory=_default_core_counts)
    seed: int = 20_240_101

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be positive")
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")
        if not self.core_counts or any(c < 1 for c in self.core_counts):
            raise ValueError("core_counts must be positive integers")

    def to_dict(self):
        return {
            "n_elements": self.n_elements,
            "n_trials": self.n_trials,
            "scalar_q": self.scalar_q,
            "core_counts": list(self.core_counts),
            "seed": self.seed,
            "sweep": "cores",
        }


@dataclass
class StreamResult:
    """Best-of-trials bandwidth per core count, plus the raw trials."""

    best_bandwidth: dict
    all_trials: dict
    bytes_per_sweep: int
    arrays: tuple = None  # (a, b, c) kept for post-run validation

    def to_report(self, config):
        report = BenchReport(benchmark="stream", config=config.to_dict())
        for cores in sorted(self.best_bandwidth):
            report.add_row(
                labels={"cores": cores},
                metrics={
                    "best_bandwidth": (self.best_bandwidth[cores], "B/s"),
                    "bytes_per_sweep": (self.bytes_per_sweep, "B"),
                },
            )
            report.rows[-1]["detail"] = {
                "trials_bandwidth": list(self.all_trials[cores])
            }
        return report


@njit(nogil=True, cache=True)
def _triad_loop(a, b, c, q, lo, hi):  # pragma: no cover - compiled
    for i in range(lo, hi):
        a[i] = b[i] + q * c[i]


def triad_kernel(a, b, c, q, lo, hi):
    """a[lo:hi] = b[lo:hi] + q * c[lo:hi], one pass, GIL released."""
    if not (0 <= lo <= hi <= len(a)) or len(a) != len(b) or len(a) != len(c):
        raise ValueError("triad range out of bounds or array lengths differ")
    _triad_loop(a, b, c, q, lo, hi)


def bytes_per_sweep(n_elements, element_size=8):
    """STREAM traffic accounting: read b, read c, write a."""
    return 3 * element_size * n_elements


def _block_bounds(n_elements, n_blocks):
    base, rem = divmod(n_elements, n_blocks)
    bounds = []
    start = 0
    for i in range(n_blocks):
        size = base + (1 if i < rem else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def _cache_size_bytes():
    """Largest reported CPU cache, or a 32 MiB fallback when unreadable."""
    sizes = []
    for path in glob.glob("/sys/devices/system/cpu/cpu0/cache/index*/size"):
        try:
            with open(path) as fh:
                text = fh.read().strip()
        except OSError:
            continue
        if text.endswith("K"):
            sizes.append(int(text[:-1]) * 1024)
        elif text.endswith("M"):
            sizes.append(int(text[:-1]) * 1024 * 1024)
    return max(sizes) if sizes else 32 * 1024 * 1024


def _allocate(cfg):
    n = cfg.n_elements
    try:
        a = np.zeros(n, dtype=np.float64)
        rng = np.random.default_rng(cfg.seed)
        b = rng.uniform(1.0, 2.0, n)
        c = rng.uniform(1.0, 2.0, n)
    except MemoryError as err:
        raise MemoryError(
            f"stream needs {3 * 8 * n} bytes for three {n}-element double arrays"
        ) from err
    return a, b, c


def _timed_sweep(pool, a, b, c, q, bounds):
    barrier = threading.Barrier(len(bounds) + 1)

    def block(lo, hi):
        barrier.wait()
        _triad_loop(a, b, c, q, lo, hi)

    futures = [spawn(pool, block, lo, hi) for lo, hi in bounds]
    # start the clock before releasing the barrier: reading it after can
    # miss the whole kernel when the OS parks this thread first
    t0 = time.perf_counter()
    barrier.wait()
    wait_all(futures)
    return time.perf_counter() - t0


def run_stream(cfg, pool=None):
    """Sweep the TRIAD over cfg.core_counts; best-of-trials per count.

    With pool=None each core count gets a fresh pool of exactly that many
    workers, mirroring one-benchmark-run-per-thread-count execution. A
    caller-supplied pool is reused for every count and must be at least as
    wide as the largest one.
    """
    min_bytes = 4 * _cache_size_bytes()
    if 3 * 8 * cfg.n_elements < min_bytes:
        warnings.warn(
            f"array footprint {3 * 8 * cfg.n_elements} B is below ~4x the "
            f"last-level cache; bandwidth numbers will reflect cache, not memory",
            stacklevel=2,
        )
    if pool is not None and max(cfg.core_counts) > pool.n_workers:
        raise ValueError(
            f"core_counts up to {max(cfg.core_counts)} exceed pool width {pool.n_workers}"
        )

    a, b, c = _allocate(cfg)
    q = cfg.scalar_q
    best = {}
    trials = {}
    for cores in cfg.core_counts:
        bounds = _block_bounds(cfg.n_elements, cores)
        own_pool = WorkerPool(cores) if pool is None else None
        use = own_pool if own_pool is not None else pool
        try:
            _timed_sweep(use, a, b, c, q, bounds)  # warm-up (and JIT) sweep
            seconds = [_timed_sweep(use, a, b, c, q, bounds) for _ in range(cfg.n_trials)]
        finally:
            if own_pool is not None:
                own_pool.shutdown()
        sweep_bytes = bytes_per_sweep(cfg.n_elements)
        trials[cores] = [sweep_bytes / s for s in seconds]
        best[cores] = max(trials[cores])
    return StreamResult(
        best_bandwidth=best,
        all_trials=trials,
        bytes_per_sweep=bytes_per_sweep(cfg.n_elements),
        arrays=(a, b, c),
    )


def validate_stream(a, b, c, cfg):
    """Max elementwise relative error of a against b + q*c."""
    expected = b + cfg.scalar_q * c
    return float(np.max(np.abs(a - expected) / np.abs(expected)))
