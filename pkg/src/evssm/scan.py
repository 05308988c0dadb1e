"""Linear recurrence x_k = a_k * x_{k-1} + bu_k, sequential and as a parallel scan.

The parallel path uses the recursive odd/even schedule, so the combine tree is
a function of the length only: results are bit-identical for every thread
count. Threads, when enabled, only split elementwise combine work into chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np


class ScanElement(NamedTuple):
    """One (transition, forced-term) pair consumed by the associative combine."""

    a: np.ndarray
    bu: np.ndarray


def combine(q_i: ScanElement, q_j: ScanElement) -> ScanElement:
    """Binary associative operator: (a_j a_i, a_j bu_i + bu_j). q_i precedes q_j."""
    a_i, bu_i = q_i
    a_j, bu_j = q_j
    return ScanElement(a_j * a_i, a_j * bu_i + bu_j)


def scan_sequential(a, bu, prev_state=None) -> np.ndarray:
    """Reference recurrence: x_1 = a_1 * prev + bu_1, x_k = a_k * x_{k-1} + bu_k.

    a and bu have shape (L, ...); states are returned with the same shape.
    """
    a = np.asarray(a)
    bu = np.asarray(bu)
    if a.shape != bu.shape:
        raise ValueError(f"scan shape mismatch: {a.shape} vs {bu.shape}")
    if a.shape[0] < 1:
        raise ValueError("scan requires length >= 1")
    out = np.empty(bu.shape, dtype=np.result_type(a.dtype, bu.dtype))
    if prev_state is None:
        x = np.zeros(bu.shape[1:], dtype=out.dtype)
    else:
        x = np.asarray(prev_state, dtype=out.dtype)
    for k in range(a.shape[0]):
        x = a[k] * x + bu[k]
        out[k] = x
    return out


# Minimum per-chunk element count before combine work is farmed out to threads.
_THREAD_CHUNK_MIN = 1 << 14


class _Pool:
    """Chunked elementwise combine over a thread pool; results match the serial path bitwise."""

    def __init__(self, executor: ThreadPoolExecutor, workers: int):
        self.executor = executor
        self.workers = workers

    def combine(self, a_i, bu_i, a_j, bu_j):
        m = a_j.shape[0]
        per = int(np.prod(a_j.shape[1:], dtype=np.int64))
        if m * per < self.workers * _THREAD_CHUNK_MIN or m < self.workers:
            return a_j * a_i, a_j * bu_i + bu_j
        out_a = np.empty(a_j.shape, dtype=np.result_type(a_i.dtype, a_j.dtype))
        out_b = np.empty(bu_j.shape, dtype=np.result_type(bu_i.dtype, bu_j.dtype, a_j.dtype))
        bounds = np.linspace(0, m, self.workers + 1, dtype=np.int64)

        def work(lo, hi):
            np.multiply(a_j[lo:hi], a_i[lo:hi], out=out_a[lo:hi])
            np.multiply(a_j[lo:hi], bu_i[lo:hi], out=out_b[lo:hi])
            np.add(out_b[lo:hi], bu_j[lo:hi], out=out_b[lo:hi])

        futures = [
            self.executor.submit(work, bounds[w], bounds[w + 1])
            for w in range(self.workers)
            if bounds[w] < bounds[w + 1]
        ]
        for f in futures:
            f.result()
        return out_a, out_b


def _scan_rec(a, bu, pool):
    n = a.shape[0]
    if n < 2:
        return a, bu
    if pool is None:
        ra = a[1::2] * a[0:-1:2]
        rb = a[1::2] * bu[0:-1:2] + bu[1::2]
    else:
        ra, rb = pool.combine(a[0:-1:2], bu[0:-1:2], a[1::2], bu[1::2])
    oa, ob = _scan_rec(ra, rb, pool)
    if n % 2 == 0:
        src_a, src_b = oa[:-1], ob[:-1]
    else:
        src_a, src_b = oa, ob
    if pool is None:
        ea = a[2::2] * src_a
        eb = a[2::2] * src_b + bu[2::2]
    else:
        ea, eb = pool.combine(src_a, src_b, a[2::2], bu[2::2])
    out_a = np.empty(a.shape, dtype=ra.dtype)
    out_b = np.empty(bu.shape, dtype=rb.dtype)
    out_a[0] = a[0]
    out_b[0] = bu[0]
    out_a[2::2] = ea
    out_b[2::2] = eb
    out_a[1::2] = oa
    out_b[1::2] = ob
    return out_a, out_b


def scan_parallel(
    a,
    bu,
    prev_state=None,
    reverse: bool = False,
    threads: int | None = None,
    min_parallel_len: int = 4096,
) -> np.ndarray:
    """States of the recurrence via the odd/even associative scan.

    Matches scan_sequential up to floating-point reassociation; with
    reverse=True it equals the sequential scan applied to the reversed element
    sequence, re-reversed. prev_state is folded into the first forced term
    (bu_1 <- a_1 * prev + bu_1), which is exact recurrence semantics.
    """
    a = np.asarray(a)
    bu = np.asarray(bu)
    if a.shape != bu.shape:
        raise ValueError(f"scan shape mismatch: {a.shape} vs {bu.shape}")
    length = a.shape[0]
    if length < 1:
        raise ValueError("scan requires length >= 1")
    dtype = np.result_type(a.dtype, bu.dtype)
    if reverse:
        a = a[::-1]
        bu = bu[::-1]
    bu = np.ascontiguousarray(bu, dtype=dtype)
    a = np.ascontiguousarray(a, dtype=dtype)
    if prev_state is not None:
        bu = bu.copy()
        bu[0] = bu[0] + a[0] * np.asarray(prev_state, dtype=dtype)

    use_threads = threads is not None and threads > 1 and length >= min_parallel_len
    if use_threads:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            _, states = _scan_rec(a, bu, _Pool(ex, threads))
    else:
        _, states = _scan_rec(a, bu, None)
    if reverse:
        states = states[::-1]
    return np.ascontiguousarray(states)
