"""Futures, continuations, and dataflow on the worker pool.

Walks through the three composition primitives the benchmarks are built
from, then runs a diamond-shaped dependency graph to show that work only
starts when its inputs are ready.
"""

import time

from taskbench.taskgraph import WorkerPool, dataflow, spawn, then, wait_all

with WorkerPool(4) as pool:
    # spawn puts a task on the pool and hands back a future
    f = spawn(pool, lambda: 6 * 7)
    print("spawn(()->42).wait()      ->", f.wait())

    # then chains a continuation that fires when the future is ready
    g = then(f, lambda x: x + 1)
    print("then(f, x->x+1).wait()    ->", g.wait())

    # dataflow delays a function until every dependency resolved
    h = dataflow([f, g], lambda a, b: (a, b), pool=pool)
    print("dataflow([f,g], pair)     ->", h.wait())

    # diamond: a -> {b, c} -> d; b and c run concurrently
    def slow(tag, seconds):
        def run(*deps):
            time.sleep(seconds)
            return tag

        return run

    t0 = time.perf_counter()
    a = spawn(pool, slow("a", 0.05))
    b = dataflow([a], slow("b", 0.2), pool=pool)
    c = dataflow([a], slow("c", 0.2), pool=pool)
    d = dataflow([b, c], lambda x, y: x + y, pool=pool)
    print("diamond result            ->", d.wait())
    print(f"diamond wall time         -> {time.perf_counter() - t0:.2f}s "
          "(b and c overlapped, so well under 0.45s)")

    # a long chain with one dependency each stays iterative, never recursive
    chain = spawn(pool, lambda: 0)
    for _ in range(10_000):
        chain = then(chain, lambda x: x + 1)
    print("10,000-link chain         ->", chain.wait())

    # failures propagate instead of invoking downstream work
    bad = spawn(pool, lambda: 1 / 0)
    downstream = then(bad, lambda x: print("never runs"))
    print("error propagation         ->", type(downstream.exception()).__name__)

    print("all futures resolved      ->", wait_all([f, g, h]) is not None)
