"""Alternating least squares recommender benchmark on MovieLens-format data.

The ratings file is the stock MovieLens ratings.csv layout
(userId,movieId,rating,timestamp); raw ids are densified in first-appearance
order and duplicate (user, item) pairs resolve last-wins. Factorization
alternates exact per-row normal-equation solves: every user row minimizes

    sum_j (R_uj - x . V_j)^2 + lambda * |x|^2

given the current V, and the item half-sweep is the mirror image. Because
each half-sweep is an exact block minimizer, the regularized loss is
non-increasing after every half-sweep, which the tests lean on.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .report import BenchReport
from .taskgraph import WorkerPool, spawn, wait_all

EXPECTED_HEADER = ["userId", "movieId", "rating", "timestamp"]
DEFAULT_MAX_LINES = 200_000


class RatingsFormatError(ValueError):
    """Malformed MovieLens ratings input."""


@dataclass
class RatingsMatrix:
    """Sparse observed ratings with per-user and per-item adjacency."""

    n_users: int
    n_items: int
    user_items: list  # per user: int array of item indices
    user_ratings: list  # per user: float array aligned with user_items
    item_users: list
    item_ratings: list
    user_id_map: dict
    item_id_map: dict
    duplicate_count: int = 0

    @property
    def n_observations(self):
        return sum(len(ix) for ix in self.user_items)

    def iter_observations(self):
        for u in range(self.n_users):
            for i, r in zip(self.user_items[u], self.user_ratings[u]):
                yield u, int(i), float(r)

    @classmethod
    def from_observations(cls, triples, n_users=None, n_items=None):
        """Build from (user_index, item_index, rating) triples, last-wins."""
        seen = {}
        dups = 0
        for u, i, r in triples:
            if (u, i) in seen:
                dups += 1
            seen[(u, i)] = float(r)
        if n_users is None:
            n_users = 1 + max((u for u, _ in seen), default=-1)
        if n_items is None:
            n_items = 1 + max((i for _, i in seen), default=-1)
        return _assemble(seen, n_users, n_items, {}, {}, dups)


def _assemble(cell_map, n_users, n_items, user_id_map, item_id_map, dups):
    by_user = [[] for _ in range(n_users)]
    by_item = [[] for _ in range(n_items)]
    for (u, i), r in cell_map.items():
        by_user[u].append((i, r))
        by_item[i].append((u, r))
    user_items, user_ratings, item_users, item_ratings = [], [], [], []
    for entries in by_user:
        entries.sort()
        user_items.append(np.array([i for i, _ in entries], dtype=np.int64))
        user_ratings.append(np.array([r for _, r in entries], dtype=np.float64))
    for entries in by_item:
        entries.sort()
        item_users.append(np.array([u for u, _ in entries], dtype=np.int64))
        item_ratings.append(np.array([r for _, r in entries], dtype=np.float64))
    return RatingsMatrix(
        n_users=n_users,
        n_items=n_items,
        user_items=user_items,
        user_ratings=user_ratings,
        item_users=item_users,
        item_ratings=item_ratings,
        user_id_map=user_id_map,
        item_id_map=item_id_map,
        duplicate_count=dups,
    )


def load_ratings(path, max_lines=DEFAULT_MAX_LINES):
    """Read at most `max_lines` data rows (the header does not count)."""
    user_ids = {}
    item_ids = {}
    cells = {}
    dups = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RatingsFormatError(f"{path}: empty file, expected a header") from None
        if [h.strip() for h in header] != EXPECTED_HEADER:
            raise RatingsFormatError(
                f"{path}: expected header {','.join(EXPECTED_HEADER)}, got {','.join(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(cells) + dups >= max_lines:
                break
            if not row:
                continue
            try:
                raw_user = int(row[0])
                raw_item = int(row[1])
                rating = float(row[2])
                _ = row[3]
            except (ValueError, IndexError) as err:
                raise RatingsFormatError(f"{path}: line {line_no}: malformed row {row!r}") from err
            u = user_ids.setdefault(raw_user, len(user_ids))
            i = item_ids.setdefault(raw_item, len(item_ids))
            if (u, i) in cells:
                dups += 1
            cells[(u, i)] = rating
    return _assemble(cells, len(user_ids), len(item_ids), user_ids, item_ids, dups)


@dataclass
class AlsModel:
    """U (n_users x k) and V (k x n_items) factors plus the loss trace."""

    U: np.ndarray
    V: np.ndarray
    k: int
    lam: float
    loss_trace: list = field(default_factory=list)

    def predict(self, u, i):
        return float(self.U[u] @ self.V[:, i])


def solve_user_row(u, V, obs_items, obs_ratings, lam):
    """Minimizer of the regularized least-squares row problem for user u."""
    k = V.shape[0]
    Vo = V[:, obs_items]
    A = Vo @ Vo.T + lam * np.eye(k)
    b = Vo @ obs_ratings
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(f"singular normal equations for user {u}: {err}") from err


def _solve_item_col(i, U, obs_users, obs_ratings, lam):
    k = U.shape[1]
    Uo = U[obs_users, :]
    A = Uo.T @ Uo + lam * np.eye(k)
    b = Uo.T @ obs_ratings
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(f"singular normal equations for item {i}: {err}") from err


def regularized_loss(R, U, V, lam):
    """sum_obs (R - UV)^2 + lambda * (|U|^2 + |V|^2)."""
    total = 0.0
    for u in range(R.n_users):
        items = R.user_items[u]
        if len(items) == 0:
            continue
        err = R.user_ratings[u] - U[u] @ V[:, items]
        total += float(err @ err)
    total += lam * (float(np.sum(U * U)) + float(np.sum(V * V)))
    return total


def _chunks(n, n_chunks):
    base, rem = divmod(n, n_chunks)
    out = []
    lo = 0
    for i in range(n_chunks):
        size = base + (1 if i < rem else 0)
        if size:
            out.append((lo, lo + size))
        lo += size
    return out


def als_fit(R, k=10, lam=0.1, n_sweeps=10, pool=None, seed=20_240_101):
    """Alternate exact user and item half-sweeps; loss after each half-sweep.

    Rows within a half-sweep are independent (they read the fixed opposite
    factor), so they run as parallel tasks when a pool is given; results do
    not depend on the execution order. Rows with no observations stay zero.
    """
    if k < 1 or n_sweeps < 1:
        raise ValueError("k and n_sweeps must be positive")
    rng = np.random.default_rng(seed)
    U = np.zeros((R.n_users, k))
    V = rng.random((k, R.n_items))

    def user_block(lo, hi):
        for u in range(lo, hi):
            items = R.user_items[u]
            if len(items) == 0:
                U[u, :] = 0.0
                continue
            U[u, :] = solve_user_row(u, V, items, R.user_ratings[u], lam)

    def item_block(lo, hi):
        for i in range(lo, hi):
            users = R.item_users[i]
            if len(users) == 0:
                V[:, i] = 0.0
                continue
            V[:, i] = _solve_item_col(i, U, users, R.item_ratings[i], lam)

    def run_half(block_fn, n_rows):
        if pool is None:
            block_fn(0, n_rows)
            return
        spans = _chunks(n_rows, pool.n_workers * 4)
        wait_all([spawn(pool, block_fn, lo, hi) for lo, hi in spans])

    trace = []
    for _ in range(n_sweeps):
        run_half(user_block, R.n_users)
        trace.append(regularized_loss(R, U, V, lam))
        run_half(item_block, R.n_items)
        trace.append(regularized_loss(R, U, V, lam))
    return AlsModel(U=U, V=V, k=k, lam=lam, loss_trace=trace)


def rmse(model, R):
    """Root mean squared error over the observed cells."""
    n_obs = R.n_observations
    if n_obs == 0:
        raise ValueError("ratings matrix has no observations")
    total = 0.0
    for u in range(R.n_users):
        items = R.user_items[u]
        if len(items) == 0:
            continue
        err = R.user_ratings[u] - model.U[u] @ model.V[:, items]
        total += float(err @ err)
    return float(np.sqrt(total / n_obs))


@dataclass
class AlsConfig:
    ratings_path: str = None
    max_lines: int = DEFAULT_MAX_LINES
    k: int = 10
    lam: float = 0.1
    n_sweeps: int = 10
    core_counts: list = field(default_factory=lambda: [1])
    seed: int = 20_240_101

    def to_dict(self):
        return {
            "ratings_path": self.ratings_path,
            "max_lines": self.max_lines,
            "k": self.k,
            "lambda": self.lam,
            "n_sweeps": self.n_sweeps,
            "core_counts": list(self.core_counts),
            "seed": self.seed,
            "sweep": "cores",
        }


def run_als_benchmark(R, cfg):
    """Time the factorization (ingest excluded) per core count."""
    report = BenchReport(benchmark="als", config=cfg.to_dict())
    for cores in cfg.core_counts:
        pool = WorkerPool(cores)
        try:
            t0 = time.perf_counter()
            model = als_fit(R, cfg.k, cfg.lam, cfg.n_sweeps, pool=pool, seed=cfg.seed)
            elapsed = time.perf_counter() - t0
        finally:
            pool.shutdown()
        report.add_row(
            labels={"cores": cores},
            metrics={
                "elapsed": (elapsed, "s"),
                "rmse": (rmse(model, R), ""),
                "final_loss": (model.loss_trace[-1], ""),
            },
        )
        report.rows[-1]["detail"] = {"loss_trace": list(model.loss_trace)}
    return report
