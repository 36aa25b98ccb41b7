"""Shared-memory 2D Jacobi stencil: scalar and lane-interleaved kernels.

The update is the 4-neighbor average dst = 0.25*((north + south) + (west +
east)) with that exact association order in both kernels, so the vectorized
path over the Virtual Node Scheme layout is bit-identical to the scalar
row-major path, not merely close. The VNS layout gives each SIMD lane its
own contiguous sub-domain of columns: lane w of lane-group j' holds interior
column w*L + j', which makes neighbor access lane-uniform everywhere except
the two seam groups handled by a rotate with boundary insert.

Roofline ceilings (bandwidth / bytes-per-update) are computed under two
traffic conventions side by side: counting the write-allocate read of the
destination (24 B double / 12 B single per update) and plain read+write
(16 B / 8 B).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .report import BenchReport
from .taskgraph import WorkerPool, dataflow, ready, wait_all

PRECISION_DTYPES = {"double": np.float64, "single": np.float32}

# bytes moved per lattice-site update, by precision and traffic convention
BYTES_PER_LUP = {
    "double": {"write_allocate": 24.0, "read_write": 16.0},
    "single": {"write_allocate": 12.0, "read_write": 8.0},
}
FLOPS_PER_LUP = 4

# 128-bit lane width
DEFAULT_WIDTH = {"double": 2, "single": 4}


def _dtype_for(precision):
    try:
        return PRECISION_DTYPES[precision]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(PRECISION_DTYPES)}") from None


class Grid2D:
    """Row-major field with a fixed Dirichlet frame (the outermost cells)."""

    def __init__(self, data, precision="double"):
        dtype = _dtype_for(precision)
        self.data = np.ascontiguousarray(data, dtype=dtype)
        if self.data.ndim != 2 or min(self.data.shape) < 3:
            raise ValueError("grid must be 2D with at least one interior cell")
        self.precision = precision

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @classmethod
    def random(cls, rows, cols, precision="double", seed=0):
        rng = np.random.default_rng(seed)
        data = rng.random((rows, cols), dtype=_dtype_for(precision))
        return cls(data, precision)

    @classmethod
    def constant(cls, rows, cols, value, precision="double"):
        data = np.full((rows, cols), value, dtype=_dtype_for(precision))
        return cls(data, precision)

    def copy(self):
        return Grid2D(self.data.copy(), self.precision)

    def interior(self):
        return self.data[1:-1, 1:-1]


def step_scalar(src, dst, row_range=None):
    """One Jacobi step on interior rows [r0, r1) of the plain layout.

    row_range uses absolute row indices and defaults to the full interior.
    Boundary cells adjacent to the range are copied unchanged; the north and
    south frame rows are copied by the range touching them.
    """
    if src.data.shape != dst.data.shape:
        raise ValueError("src and dst shapes differ")
    rows = src.rows
    r0, r1 = row_range if row_range is not None else (1, rows - 1)
    if not (1 <= r0 <= r1 <= rows - 1):
        raise ValueError("row_range outside grid interior")
    s = src.data
    dst.data[r0:r1, 1:-1] = 0.25 * (
        (s[r0 - 1 : r1 - 1, 1:-1] + s[r0 + 1 : r1 + 1, 1:-1])
        + (s[r0:r1, :-2] + s[r0:r1, 2:])
    )
    dst.data[r0:r1, 0] = s[r0:r1, 0]
    dst.data[r0:r1, -1] = s[r0:r1, -1]
    if r0 == 1:
        dst.data[0, :] = s[0, :]
    if r1 == rows - 1:
        dst.data[-1, :] = s[-1, :]


class VnsGrid2D:
    """Lane-interleaved layout of a Grid2D.

    data[i, j', w] holds the cell at interior column w*L + j' of row i; the
    west/east frame columns are kept separately per row. Frame rows (0 and
    rows-1) are packed like any other row so north/south access is uniform.
    """

    def __init__(self, data, west, east, precision):
        self.data = data  # (rows, L, W)
        self.west = west  # (rows,)
        self.east = east
        self.precision = precision

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def chunk_len(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def copy(self):
        return VnsGrid2D(
            self.data.copy(), self.west.copy(), self.east.copy(), self.precision
        )


def pack_vns(grid, width=None):
    """Pack a Grid2D into the lane-interleaved layout with W = `width` lanes."""
    if width is None:
        width = DEFAULT_WIDTH[grid.precision]
    interior_cols = grid.cols - 2
    if interior_cols % width:
        pad = width - interior_cols % width
        raise ValueError(
            f"{interior_cols} interior columns not divisible by width {width}; "
            f"pad the grid to {grid.cols + pad} columns"
        )
    chunk = interior_cols // width
    data = (
        grid.data[:, 1:-1]
        .reshape(grid.rows, width, chunk)
        .transpose(0, 2, 1)
        .copy()
    )
    return VnsGrid2D(
        data, grid.data[:, 0].copy(), grid.data[:, -1].copy(), grid.precision
    )


def unpack_vns(vgrid):
    """Exact inverse of pack_vns."""
    rows = vgrid.rows
    interior = vgrid.data.transpose(0, 2, 1).reshape(rows, -1)
    data = np.empty((rows, interior.shape[1] + 2), dtype=interior.dtype)
    data[:, 1:-1] = interior
    data[:, 0] = vgrid.west
    data[:, -1] = vgrid.east
    return Grid2D(data, vgrid.precision)


def gather_west(vgrid, row, group):
    """Lane-group whose lane w is the west neighbor of lane w of `group`.

    Interior groups shift to group-1 unchanged; at the seam (group 0) lane 0
    takes the west frame value and lanes w>0 rotate up from the last group.
    """
    if group > 0:
        return vgrid.data[row, group - 1].copy()
    out = np.empty(vgrid.width, dtype=vgrid.data.dtype)
    out[0] = vgrid.west[row]
    out[1:] = vgrid.data[row, vgrid.chunk_len - 1, :-1]
    return out


def gather_east(vgrid, row, group):
    """Mirror of gather_west for the east neighbor."""
    if group < vgrid.chunk_len - 1:
        return vgrid.data[row, group + 1].copy()
    out = np.empty(vgrid.width, dtype=vgrid.data.dtype)
    out[:-1] = vgrid.data[row, 0, 1:]
    out[-1] = vgrid.east[row]
    return out


def step_vns(src, dst, row_range=None):
    """One Jacobi step on the lane-interleaved layout, lane-wise.

    Same association order as step_scalar, so results match it bitwise.
    """
    if src.data.shape != dst.data.shape:
        raise ValueError("src and dst shapes differ")
    rows = src.rows
    r0, r1 = row_range if row_range is not None else (1, rows - 1)
    if not (1 <= r0 <= r1 <= rows - 1):
        raise ValueError("row_range outside grid interior")
    c = src.data[r0:r1]
    north = src.data[r0 - 1 : r1 - 1]
    south = src.data[r0 + 1 : r1 + 1]

    west = np.empty_like(c)
    west[:, 1:, :] = c[:, :-1, :]
    west[:, 0, 0] = src.west[r0:r1]
    west[:, 0, 1:] = c[:, -1, :-1]

    east = np.empty_like(c)
    east[:, :-1, :] = c[:, 1:, :]
    east[:, -1, -1] = src.east[r0:r1]
    east[:, -1, :-1] = c[:, 0, 1:]

    dst.data[r0:r1] = 0.25 * ((north + south) + (west + east))
    dst.west[r0:r1] = src.west[r0:r1]
    dst.east[r0:r1] = src.east[r0:r1]
    if r0 == 1:
        dst.data[0] = src.data[0]
        dst.west[0] = src.west[0]
        dst.east[0] = src.east[0]
    if r1 == rows - 1:
        dst.data[-1] = src.data[-1]
        dst.west[-1] = src.west[-1]
        dst.east[-1] = src.east[-1]


@dataclass
class RooflineParams:
    """Inputs of the bandwidth-bound performance ceiling."""

    bytes_per_lup: float
    flops_per_lup: int = FLOPS_PER_LUP

    @classmethod
    def for_precision(cls, precision, convention="write_allocate"):
        return cls(bytes_per_lup=BYTES_PER_LUP[precision][convention])


def expected_peak(bandwidth, params):
    """Bandwidth-bound ceiling in lattice updates per second."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return bandwidth / params.bytes_per_lup


def expected_peak_conventions(bandwidth, precision):
    """Both traffic conventions side by side, in updates/second."""
    return {
        conv: bandwidth / bpl for conv, bpl in BYTES_PER_LUP[precision].items()
    }


@dataclass
class StencilMetrics:
    mlups: float
    elapsed: float
    core_count: int
    kernel: str
    precision: str


@dataclass
class JacobiConfig:
    rows: int = 4096
    cols: int = 4096
    timesteps: int = 100
    kernel: str = "scalar"
    precision: str = "double"
    core_counts: list = field(default_factory=lambda: [1])
    strips: int = None  # tasks per timestep; defaults to the core count
    width: int = None  # SIMD lanes for the vector kernel
    seed: int = 20_240_101
    init_value: float = None  # constant initial grid instead of the seeded random one
    keep_grids: bool = False

    def __post_init__(self):
        if self.kernel not in ("scalar", "vector"):
            raise ValueError("kernel must be 'scalar' or 'vector'")
        _dtype_for(self.precision)
        if self.width is None:
            self.width = DEFAULT_WIDTH[self.precision]
        if self.rows < 3 or self.cols < 3:
            raise ValueError("grid too small for an interior")
        if self.timesteps < 1:
            raise ValueError("timesteps must be positive")

    def to_dict(self):
        return {
            "rows": self.rows,
            "cols": self.cols,
            "timesteps": self.timesteps,
            "kernel": self.kernel,
            "precision": self.precision,
            "core_counts": list(self.core_counts),
            "strips": self.strips,
            "width": self.width,
            "seed": self.seed,
            "init_value": self.init_value,
            "sweep": "cores",
        }


def _strip_bounds(rows, n_strips):
    interior = rows - 2
    n_strips = min(n_strips, interior)
    base, rem = divmod(interior, n_strips)
    bounds = []
    r = 1
    for i in range(n_strips):
        size = base + (1 if i < rem else 0)
        bounds.append((r, r + size))
        r += size
    return bounds


@dataclass
class JacobiResult:
    metrics: list
    final_grids: dict  # core count -> Grid2D (only when cfg.keep_grids)


def run_jacobi(cfg, pool=None):
    """Strong-scaling Jacobi sweep over cfg.core_counts.

    Each strip is one task per timestep; a strip at step t+1 runs only after
    its own and adjacent strips finished step t (wired with dataflow), with
    the two buffers swapping roles every step. The final grid is therefore
    bit-identical for any strip count or core count.
    """
    metrics = []
    grids = {}
    for cores in cfg.core_counts:
        own_pool = WorkerPool(cores) if pool is None else None
        use = own_pool if own_pool is not None else pool
        try:
            m, final = _run_one(cfg, cores, use)
        finally:
            if own_pool is not None:
                own_pool.shutdown()
        metrics.append(m)
        if cfg.keep_grids:
            grids[cores] = final
    return JacobiResult(metrics=metrics, final_grids=grids)


def _run_one(cfg, cores, pool):
    try:
        if cfg.init_value is not None:
            grid = Grid2D.constant(cfg.rows, cfg.cols, cfg.init_value, cfg.precision)
        else:
            grid = Grid2D.random(cfg.rows, cfg.cols, cfg.precision, cfg.seed)
    except MemoryError as err:
        need = 2 * cfg.rows * cfg.cols * np.dtype(_dtype_for(cfg.precision)).itemsize
        raise MemoryError(f"jacobi grid needs about {need} bytes") from err

    if cfg.kernel == "vector":
        bufs = [pack_vns(grid, cfg.width)]
        bufs.append(bufs[0].copy())
        step = step_vns
    else:
        bufs = [grid, grid.copy()]
        step = step_scalar

    n_strips = cfg.strips if cfg.strips is not None else cores
    bounds = _strip_bounds(cfg.rows, n_strips)
    n = len(bounds)

    t0 = time.perf_counter()
    prev = [ready(None)] * n
    for t in range(cfg.timesteps):
        src, dst = bufs[t % 2], bufs[(t + 1) % 2]
        cur = []
        for s, rr in enumerate(bounds):
            deps = [prev[s]]
            if s > 0:
                deps.append(prev[s - 1])
            if s < n - 1:
                deps.append(prev[s + 1])

            def task(*_ignored, src=src, dst=dst, rr=rr):
                step(src, dst, rr)

            cur.append(dataflow(deps, task, pool=pool))
        prev = cur
    wait_all(prev)
    elapsed = time.perf_counter() - t0

    final = bufs[cfg.timesteps % 2]
    if cfg.kernel == "vector":
        final = unpack_vns(final)
    lups = (cfg.rows - 2) * (cfg.cols - 2) * cfg.timesteps
    m = StencilMetrics(
        mlups=lups / elapsed / 1e6,
        elapsed=elapsed,
        core_count=cores,
        kernel=cfg.kernel,
        precision=cfg.precision,
    )
    return m, final


def jacobi_report(cfg, result, bandwidth_by_cores=None):
    """BenchReport rows with measured MLUPs and, when bandwidth per core
    count is supplied, the expected-peak ceiling under both conventions."""
    report = BenchReport(benchmark="jacobi2d", config=cfg.to_dict())
    for m in result.metrics:
        metrics = {
            "mlups": (m.mlups, "MLUP/s"),
            "mflops": (m.mlups * FLOPS_PER_LUP, "MFLOP/s"),
            "elapsed": (m.elapsed, "s"),
        }
        if bandwidth_by_cores and m.core_count in bandwidth_by_cores:
            bw = bandwidth_by_cores[m.core_count]
            for conv, bpl in BYTES_PER_LUP[cfg.precision].items():
                name = f"expected_peak_mlups_{int(bpl)}B"
                metrics[name] = (bw / bpl / 1e6, "MLUP/s")
        report.add_row(labels={"cores": m.core_count}, metrics=metrics)
    return report
