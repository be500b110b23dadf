"""Chunked prefix/suffix scans, reductions and the fused transform-scan-reduce.

Parallel scans use a two-phase reduce-then-scan over fixed-size chunks:
per-chunk totals, an exclusive scan of those totals, then a re-scan of each
chunk starting from its carried offset.  Chunk boundaries come from the
:class:`ChunkPlan`, and the thread count only decides which thread handles
which chunk, so results are bit-identical for any ``worker_count``.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import NonPositiveDenominator

DEFAULT_CHUNK_SIZE = 65536


def default_workers() -> int:
    env = os.environ.get("SURVSCAN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ChunkPlan:
    chunk_size: int = DEFAULT_CHUNK_SIZE
    worker_count: int = 1

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")

    @classmethod
    def default(cls) -> "ChunkPlan":
        return cls(DEFAULT_CHUNK_SIZE, default_workers())

    @classmethod
    def serial(cls, n: int) -> "ChunkPlan":
        """Single chunk, single worker: plain left-to-right summation."""
        return cls(max(1, int(n)), 1)

    def n_chunks(self, n: int) -> int:
        return -(-n // self.chunk_size)


_pools: dict[int, ThreadPoolExecutor] = {}
_pool_lock = threading.Lock()


def _pool(workers: int) -> ThreadPoolExecutor:
    with _pool_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="survscan-scan")
            _pools[workers] = pool
        return pool


def run_chunks(plan: ChunkPlan, n_chunks: int, fn) -> list:
    """Call ``fn(c0, c1)`` over contiguous chunk ranges, one per worker."""
    groups = min(plan.worker_count, n_chunks)
    if groups <= 1:
        return [fn(0, n_chunks)]
    edges = np.linspace(0, n_chunks, groups + 1).astype(np.int64)
    futs = [_pool(plan.worker_count).submit(fn, int(a), int(b))
            for a, b in zip(edges[:-1], edges[1:]) if b > a]
    return [f.result() for f in futs]


def _as_lanes(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError("expected a vector or a (lanes, n) array")
    return arr


def _lane_scan(lanes: np.ndarray, plan: ChunkPlan, reverse: bool) -> np.ndarray:
    nl, n = lanes.shape
    out = np.empty_like(lanes)
    if n == 0:
        return out
    nch = plan.n_chunks(n)
    chunk = plan.chunk_size
    if nch == 1:
        offsets = np.zeros((nl, 1))
    else:
        totals = np.empty((nl, nch))
        run_chunks(plan, nch, lambda a, b: K.lane_chunk_totals(lanes, chunk, a, b, reverse, totals))
        offsets = K.exclusive_offsets(totals, reverse)
    run_chunks(plan, nch, lambda a, b: K.lane_chunk_scan(lanes, chunk, a, b, reverse, offsets, out))
    return out


def prefix_scan(values, plan: ChunkPlan | None = None) -> np.ndarray:
    """Inclusive running sum from the front: ``out[i] = sum(values[:i+1])``."""
    x = np.asarray(values, dtype=np.float64)
    plan = plan or ChunkPlan.default()
    return _lane_scan(_as_lanes(x), plan, False).reshape(x.shape)


def suffix_scan(values, plan: ChunkPlan | None = None) -> np.ndarray:
    """Inclusive running sum from the back: ``out[i] = sum(values[i:])``."""
    x = np.asarray(values, dtype=np.float64)
    plan = plan or ChunkPlan.default()
    return _lane_scan(_as_lanes(x), plan, True).reshape(x.shape)


def tuple3_scan(lanes, direction: str = "forward", plan: ChunkPlan | None = None) -> np.ndarray:
    """Scan three aligned lanes in one pass; returns a ``(3, n)`` array."""
    arr = _as_lanes(lanes)
    if arr.shape[0] != 3:
        raise ValueError("tuple3_scan needs exactly three lanes")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    return _lane_scan(arr, plan or ChunkPlan.default(), direction == "backward")


def reduce_sum(values, plan: ChunkPlan | None = None) -> float:
    """Chunked sum: per-chunk left-to-right totals, then totals in chunk order."""
    lanes = _as_lanes(values)
    if lanes.shape[1] == 0:
        return 0.0
    plan = plan or ChunkPlan.default()
    nch = plan.n_chunks(lanes.shape[1])
    totals = np.empty((lanes.shape[0], nch))
    run_chunks(plan, nch, lambda a, b: K.lane_chunk_totals(lanes, plan.chunk_size, a, b, False, totals))
    return float(K.sum_in_order(totals)[0])


def block_event_weights(event_mask, block_starts) -> np.ndarray:
    """Move each tied block's event count onto the block's last row.

    Evaluating the inclusive prefix scan at a block's last row gives the
    block-final value, so weighting only that row is the same as broadcasting
    the block-final value across the block and applying the event mask.
    """
    mask = np.asarray(event_mask, dtype=np.float64)
    starts = np.asarray(block_starts, dtype=np.int64)
    out = np.zeros_like(mask)
    if mask.size == 0:
        return out
    counts = np.add.reduceat(mask, starts[:-1])
    out[starts[1:] - 1] = counts
    return out


def _optional(arr, n):
    if arr is None:
        return np.zeros(0)
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError("per-element factors must match the lane length")
    return arr


def _check_bad(bad):
    if sum(bad):
        raise NonPositiveDenominator(
            f"{sum(bad)} risk-set denominator(s) accumulated to a value <= 0"
        )


def fused_block_reduce(lanes, bw, plan: ChunkPlan, weights=None, scale=None):
    """Fused pass over precomputed block-end weights ``bw``.

    ``weights`` switches on the backward lanes (``weights * lane`` summed
    over strictly later rows), and ``scale`` multiplies them per row.  Both
    are read at each tied block's last row, so ``scale`` should be constant
    within a block.
    """
    lanes = _as_lanes(lanes)
    n = lanes.shape[1]
    has_u = weights is not None
    u = _optional(weights, n)
    sc = _optional(scale, n) if has_u else np.zeros(0)
    if has_u and scale is None:
        sc = np.ones(n)
    if n == 0:
        return 0.0, 0.0
    chunk = plan.chunk_size
    nch = plan.n_chunks(n)
    tot_f = np.zeros((3, nch))
    tot_b = np.zeros((3, nch))
    run_chunks(plan, nch, lambda a, b: K.dense_fused_totals(lanes, u, has_u, chunk, a, b, tot_f, tot_b))
    off_f = K.exclusive_offsets(tot_f, False)
    off_b = K.exclusive_offsets(tot_b, True)
    partial = np.zeros((2, nch))
    bad = run_chunks(plan, nch, lambda a, b: K.dense_fused_apply(
        lanes, bw, u, sc, has_u, chunk, a, b, off_f, off_b, partial))
    _check_bad(bad)
    g, h = K.sum_in_order(partial)
    return float(g), float(h)


def fused_scan_transform_reduce(lanes, event_mask, block_starts, plan: ChunkPlan | None = None,
                                weights=None, scale=None):
    """Scan -> tied-block broadcast -> risk-set transform -> masked sums, in one pass.

    ``lanes`` holds ``(e, e*x, e*x**2)``.  With ``d`` the denominators
    (forward sums of lane 0, plus ``scale`` times the backward sums of
    ``weights * lane`` over strictly later rows) and likewise for the two
    numerators, returns ``(sum_i m_i G_i, sum_i m_i (H_i - G_i**2))`` with
    ``G = num1 / d`` and ``H = num2 / d``.
    """
    plan = plan or ChunkPlan.default()
    lanes = _as_lanes(lanes)
    if lanes.shape[0] != 3:
        raise ValueError("expected three lanes")
    bw = block_event_weights(event_mask, block_starts)
    return fused_block_reduce(lanes, bw, plan, weights, scale)


def _exclusive_from_inclusive_suffix(suf: np.ndarray) -> np.ndarray:
    out = np.zeros_like(suf)
    out[:, :-1] = suf[:, 1:]
    return out


def separated_block_reduce(lanes, bw, plan: ChunkPlan, weights=None, scale=None):
    """Reference path: separate scans, a materialized transform, two reductions."""
    lanes = _as_lanes(lanes)
    n = lanes.shape[1]
    if n == 0:
        return 0.0, 0.0
    scanned = np.vstack([prefix_scan(lanes[k], plan) for k in range(3)])
    m = bw != 0.0
    w = bw[m]
    d0, d1, d2 = scanned[0, m], scanned[1, m], scanned[2, m]
    if weights is not None:
        u = np.asarray(weights, dtype=np.float64)
        sc = np.ones(n) if scale is None else np.asarray(scale, dtype=np.float64)
        suf = np.vstack([suffix_scan(u * lanes[k], plan) for k in range(3)])
        excl = _exclusive_from_inclusive_suffix(suf)
        s = sc[m]
        d0 = d0 + s * excl[0, m]
        d1 = d1 + s * excl[1, m]
        d2 = d2 + s * excl[2, m]
    if np.any(~(d0 > 0.0)):
        raise NonPositiveDenominator(
            f"{int(np.sum(~(d0 > 0.0)))} risk-set denominator(s) accumulated to a value <= 0"
        )
    G = d1 / d0
    H = d2 / d0
    tg = np.zeros(n)
    th = np.zeros(n)
    tg[m] = w * G
    th[m] = w * (H - G * G)
    return reduce_sum(tg, plan), reduce_sum(th, plan)


def partially_fused_block_reduce(lanes, bw, plan: ChunkPlan, weights=None, scale=None):
    """Tuple-scan, then one transform-reduce pass over the scanned tuple."""
    lanes = _as_lanes(lanes)
    n = lanes.shape[1]
    if n == 0:
        return 0.0, 0.0
    scanned = tuple3_scan(lanes, "forward", plan)
    has_u = weights is not None
    if has_u:
        u = np.asarray(weights, dtype=np.float64)
        sc = np.ones(n) if scale is None else np.ascontiguousarray(scale, dtype=np.float64)
        excl = _exclusive_from_inclusive_suffix(tuple3_scan(u * lanes, "backward", plan))
    else:
        sc = np.zeros(0)
        excl = np.zeros((3, 0))
    nch = plan.n_chunks(n)
    partial = np.zeros((2, nch))
    bad = run_chunks(plan, nch, lambda a, b: K.transform_reduce_chunks(
        scanned, excl, bw, sc, has_u, plan.chunk_size, a, b, partial))
    _check_bad(bad)
    g, h = K.sum_in_order(partial)
    return float(g), float(h)


def separated_scan_transform_reduce(lanes, event_mask, block_starts, plan: ChunkPlan | None = None,
                                    weights=None, scale=None):
    plan = plan or ChunkPlan.default()
    bw = block_event_weights(event_mask, block_starts)
    return separated_block_reduce(lanes, bw, plan, weights, scale)


def partially_fused_scan_transform_reduce(lanes, event_mask, block_starts,
                                          plan: ChunkPlan | None = None, weights=None, scale=None):
    plan = plan or ChunkPlan.default()
    bw = block_event_weights(event_mask, block_starts)
    return partially_fused_block_reduce(lanes, bw, plan, weights, scale)
