"""Task-based performance benchmarking toolkit.

Kernels and harnesses for probing a machine the way small clusters get
probed: STREAM TRIAD bandwidth, a 2D Jacobi stencil with an explicitly
lane-interleaved variant plus roofline ceilings, a distributed 1D heat
solver with dataflow-overlapped halo exchange, an ALS recommender
benchmark, and an energy-cost model, all reporting through one record
format. Parallelism everywhere is expressed with the futures/dataflow
layer in `taskgraph`.
"""

from .taskgraph import Channel, Future, WorkerPool, dataflow, spawn, then, wait_all

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "Future",
    "WorkerPool",
    "dataflow",
    "spawn",
    "then",
    "wait_all",
]
