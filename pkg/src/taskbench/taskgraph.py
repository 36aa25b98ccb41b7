"""Minimal futures / continuations / dataflow layer on a fixed worker pool.

All benchmark drivers in this package express parallelism through this
module: `spawn` puts work on the pool, `then` chains a continuation onto a
future, and `dataflow` delays a function until every input future is ready.
Continuations run inline on whichever thread completes the last dependency;
a per-thread run queue flattens chained completions so arbitrarily deep
continuation chains never recurse.
"""

from __future__ import annotations

import queue
import threading
from collections import deque

__all__ = [
    "Future",
    "Channel",
    "ChannelError",
    "WorkerPool",
    "spawn",
    "then",
    "dataflow",
    "ready",
    "failed",
    "wait_all",
]

_PENDING = "pending"
_READY = "ready"
_FAILED = "failed"

# Per-thread queue of completion thunks. The first completion on a thread
# drains the queue iteratively; nested completions only append.
_local = threading.local()


def _run_thunks(first):
    pending = getattr(_local, "thunks", None)
    if pending is not None:
        pending.append(first)
        return
    pending = deque([first])
    _local.thunks = pending
    try:
        while pending:
            thunk = pending.popleft()
            thunk()
    finally:
        _local.thunks = None


class Future:
    """One-shot placeholder for a value produced asynchronously.

    Transitions pending -> ready(value) or pending -> failed(error) exactly
    once; a second completion raises. `wait` blocks the calling thread and
    re-raises the task's exception on failure.
    """

    __slots__ = ("_cond", "_state", "_value", "_callbacks")

    def __init__(self):
        self._cond = threading.Condition()
        self._state = _PENDING
        self._value = None
        self._callbacks = []

    def done(self):
        with self._cond:
            return self._state != _PENDING

    @property
    def state(self):
        with self._cond:
            return self._state

    def set_result(self, value):
        self._complete(_READY, value)

    def set_exception(self, error):
        if not isinstance(error, BaseException):
            error = RuntimeError(repr(error))
        self._complete(_FAILED, error)

    def _complete(self, state, value):
        with self._cond:
            if self._state != _PENDING:
                raise RuntimeError("future already completed (one-shot)")
            self._state = state
            self._value = value
            callbacks, self._callbacks = self._callbacks, []
            self._cond.notify_all()
        for cb in callbacks:
            _run_thunks(lambda cb=cb: cb(self))

    def add_done_callback(self, fn):
        """Run `fn(self)` once the future completes (now, if already done)."""
        with self._cond:
            if self._state == _PENDING:
                self._callbacks.append(fn)
                return
        _run_thunks(lambda: fn(self))

    def wait(self, timeout=None):
        """Block until completion; return the value or re-raise the error."""
        with self._cond:
            if not self._cond.wait_for(lambda: self._state != _PENDING, timeout):
                raise TimeoutError("future not completed within timeout")
            if self._state == _FAILED:
                raise self._value
            return self._value

    def exception(self, timeout=None):
        """Block until completion; return the error or None if it succeeded."""
        with self._cond:
            if not self._cond.wait_for(lambda: self._state != _PENDING, timeout):
                raise TimeoutError("future not completed within timeout")
            return self._value if self._state == _FAILED else None


def ready(value):
    """A future that is already ready with `value`."""
    f = Future()
    f.set_result(value)
    return f


def failed(error):
    """A future that has already failed with `error`."""
    f = Future()
    f.set_exception(error)
    return f


class WorkerPool:
    """Fixed set of worker threads feeding off one shared FIFO queue.

    All `n_workers` threads are created up front and live until `shutdown`.
    Tasks start in queue order; completion order is whatever the workers
    produce.
    """

    def __init__(self, n_workers=None):
        import os

        if n_workers is None:
            n_workers = os.cpu_count() or 1
        if n_workers < 1:
            raise ValueError("n_workers must be positive")
        self.n_workers = n_workers
        self._queue = queue.SimpleQueue()
        self._shutdown = False
        self._threads = [
            threading.Thread(target=self._worker_loop, name=f"pool-worker-{i}", daemon=True)
            for i in range(n_workers)
        ]
        for t in self._threads:
            t.start()

    def _worker_loop(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            fut, fn, args = item
            try:
                result = fn(*args)
            except BaseException as err:  # noqa: BLE001 - failure is the payload
                fut.set_exception(err)
            else:
                fut.set_result(result)

    def submit(self, fn, *args):
        if self._shutdown:
            raise RuntimeError("pool is shut down")
        fut = Future()
        self._queue.put((fut, fn, args))
        return fut

    def shutdown(self, wait=True):
        if self._shutdown:
            return
        self._shutdown = True
        for _ in self._threads:
            self._queue.put(None)
        if wait:
            for t in self._threads:
                t.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
        return False


def spawn(pool, task, *args):
    """Run `task(*args)` on a pool worker; the returned future carries its result."""
    return pool.submit(task, *args)


def then(f, cont):
    """Chain `cont` onto `f`: runs once with f's value after f is ready.

    On failure of `f` the continuation is skipped and the returned future
    fails with the same error.
    """
    out = Future()

    def fire(src):
        if src.state == _FAILED:
            out.set_exception(src._value)
            return
        try:
            out.set_result(cont(src._value))
        except BaseException as err:  # noqa: BLE001
            out.set_exception(err)

    f.add_done_callback(fire)
    return out


def dataflow(deps, fn, pool=None):
    """Invoke `fn(*values)` once every future in `deps` is ready.

    Values are passed in dependency order. If any dependency fails, `fn` is
    not invoked and the result future fails with the first error observed.
    With `pool=None` the function runs inline on the thread completing the
    last dependency (or the caller, if all are already ready); passing a
    pool schedules it there instead.
    """
    deps = list(deps)
    out = Future()

    def run():
        return fn(*(d._value for d in deps))

    def launch():
        if pool is None:
            try:
                out.set_result(run())
            except BaseException as err:  # noqa: BLE001
                out.set_exception(err)
        else:
            inner = pool.submit(run)
            inner.add_done_callback(lambda src: _propagate(src, out))

    if not deps:
        launch()
        return out

    remaining = [len(deps)]
    lock = threading.Lock()
    tripped = [False]

    def arm(src):
        if src.state == _FAILED:
            with lock:
                if tripped[0]:
                    return
                tripped[0] = True
            out.set_exception(src._value)
            return
        with lock:
            if tripped[0]:
                return
            remaining[0] -= 1
            last = remaining[0] == 0
            if last:
                tripped[0] = True
        if last:
            launch()

    for d in deps:
        d.add_done_callback(arm)
    return out


def _propagate(src, dst):
    if src.state == _FAILED:
        dst.set_exception(src._value)
    else:
        dst.set_result(src._value)


def wait_all(futures):
    """Block until every future is done; return their values in order."""
    return [f.wait() for f in futures]


class ChannelError(RuntimeError):
    """Raised on a duplicate set for a channel key."""


class Channel:
    """Keyed one-slot rendezvous between producers and consumers.

    `set(key, value)` and `get(key)` may happen in either order; the get
    future resolves to the value set under that key. Each key may be set
    at most once.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._slots = {}
        self._set_keys = set()

    def _slot(self, key):
        with self._lock:
            fut = self._slots.get(key)
            if fut is None:
                fut = Future()
                self._slots[key] = fut
            return fut

    def set(self, key, value):
        with self._lock:
            if key in self._set_keys:
                raise ChannelError(f"channel key {key!r} already set")
            self._set_keys.add(key)
            fut = self._slots.get(key)
            if fut is None:
                fut = Future()
                self._slots[key] = fut
        fut.set_result(value)

    def set_error(self, key, error):
        """Fail the slot for `key`, e.g. when a transport link breaks."""
        with self._lock:
            if key in self._set_keys:
                raise ChannelError(f"channel key {key!r} already set")
            self._set_keys.add(key)
            fut = self._slots.get(key)
            if fut is None:
                fut = Future()
                self._slots[key] = fut
        fut.set_exception(error)

    def get(self, key):
        """Future of the value set (or to be set) under `key`."""
        return self._slot(key)
