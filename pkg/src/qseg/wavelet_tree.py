"""wavelet tree over a real sequence: k-th smallest / quantile on any range.

The tree partitions the distinct *ranks* of the input (ties broken by
position, so ranks are a permutation of 0..n-1) by successive halving of the
rank interval. Each level keeps one prefix-count array of "routed left"
flags, which is all a range query needs to descend; values themselves are
kept once, in sorted order, and read off at the leaves. Build is
O(n log n), queries O(log n), and the counting payload is bounded by
n * (ceil(log2 n) + 1) integer entries.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import InvalidInput, InvalidQuery

_SNAP = 1e-9


def snap_ceil(t: float) -> int:
    """smallest integer >= t, except values within 1e-9 of an integer snap to it."""
    r = round(t)
    if abs(t - r) < _SNAP:
        return int(r)
    return int(math.ceil(t))


def snap_floor(t: float) -> int:
    """largest integer <= t, except values within 1e-9 of an integer snap to it."""
    r = round(t)
    if abs(t - r) < _SNAP:
        return int(r)
    return int(math.floor(t))


@njit(cache=True)
def _build_levels(ranks, prefix):
    # fills prefix[d, i] = number of left-routed elements among the first i
    # positions of the level-d arrangement.
    n = ranks.shape[0]
    depth = prefix.shape[0]
    cur = ranks.copy()
    nxt = np.empty_like(cur)
    a_lo = np.zeros(n, np.int64)
    a_hi = np.full(n, n, np.int64)
    n_lo = np.empty(n, np.int64)
    n_hi = np.empty(n, np.int64)
    for d in range(depth):
        acc = 0
        for i in range(n):
            prefix[d, i] = acc
            a = a_lo[i]
            mid = a + (a_hi[i] - a) // 2
            if cur[i] < mid:
                acc += 1
        prefix[d, n] = acc
        # stable partition of every node span into its two children
        i = 0
        while i < n:
            a = a_lo[i]
            b = a_hi[i]
            j = i
            while j < n and a_lo[j] == a and a_hi[j] == b:
                j += 1
            mid = a + (b - a) // 2
            lp = i
            rp = i + (mid - a)
            for p in range(i, j):
                g = cur[p]
                if g < mid:
                    nxt[lp] = g
                    n_lo[lp] = a
                    n_hi[lp] = mid
                    lp += 1
                else:
                    nxt[rp] = g
                    n_lo[rp] = mid
                    n_hi[rp] = b
                    rp += 1
            i = j
        cur, nxt = nxt, cur
        a_lo, n_lo = n_lo, a_lo
        a_hi, n_hi = n_hi, a_hi


@njit(cache=True)
def _kth_query(prefix, sorted_vals, n, ql, qr, k):
    # k-th smallest (1-based) among positions [ql, qr) of the original order.
    lo = 0
    hi = n
    a = 0
    b = n
    d = 0
    while b - a > 1:
        mid = a + (b - a) // 2
        node_lefts = prefix[d, hi] - prefix[d, lo]
        lefts_before = prefix[d, ql] - prefix[d, lo]
        lefts_upto = prefix[d, qr] - prefix[d, lo]
        c = lefts_upto - lefts_before
        if k <= c:
            b = mid
            hi = lo + node_lefts
            ql = lo + lefts_before
            qr = lo + lefts_upto
        else:
            k -= c
            a = mid
            new_lo = lo + node_lefts
            ql = new_lo + (ql - lo - lefts_before)
            qr = new_lo + (qr - lo - lefts_upto)
            lo = new_lo
        d += 1
    return sorted_vals[a]


@njit(cache=True)
def _build_sums(ranks, sorted_vals, prefix, sum_all, sum_left):
    # companion prefix sums used for check-loss evaluation: sum_all[d] sums the
    # level-d arrangement, sum_left[d] sums only its left-routed entries.
    # Row `depth` of sum_all is the fully sorted arrangement.
    n = ranks.shape[0]
    depth = prefix.shape[0]
    cur = ranks.copy()
    nxt = np.empty_like(cur)
    a_lo = np.zeros(n, np.int64)
    a_hi = np.full(n, n, np.int64)
    n_lo = np.empty(n, np.int64)
    n_hi = np.empty(n, np.int64)
    for d in range(depth):
        acc_a = 0.0
        acc_l = 0.0
        for i in range(n):
            sum_all[d, i] = acc_a
            sum_left[d, i] = acc_l
            v = sorted_vals[cur[i]]
            acc_a += v
            a = a_lo[i]
            mid = a + (a_hi[i] - a) // 2
            if cur[i] < mid:
                acc_l += v
        sum_all[d, n] = acc_a
        sum_left[d, n] = acc_l
        i = 0
        while i < n:
            a = a_lo[i]
            b = a_hi[i]
            j = i
            while j < n and a_lo[j] == a and a_hi[j] == b:
                j += 1
            mid = a + (b - a) // 2
            lp = i
            rp = i + (mid - a)
            for p in range(i, j):
                g = cur[p]
                if g < mid:
                    nxt[lp] = g
                    n_lo[lp] = a
                    n_hi[lp] = mid
                    lp += 1
                else:
                    nxt[rp] = g
                    n_lo[rp] = mid
                    n_hi[rp] = b
                    rp += 1
            i = j
        cur, nxt = nxt, cur
        a_lo, n_lo = n_lo, a_lo
        a_hi, n_hi = n_hi, a_hi
    acc_a = 0.0
    for i in range(n):
        sum_all[depth, i] = acc_a
        acc_a += sorted_vals[cur[i]]
    sum_all[depth, n] = acc_a


@njit(cache=True)
def _count_below_rank(prefix, n, ql, qr, r0):
    # number of elements among positions [ql, qr) whose rank is < r0.
    if r0 <= 0:
        return 0
    if r0 >= n:
        return qr - ql
    lo = 0
    hi = n
    a = 0
    b = n
    d = 0
    total = 0
    while True:
        if r0 <= a:
            return total
        if r0 >= b:
            return total + (qr - ql)
        mid = a + (b - a) // 2
        node_lefts = prefix[d, hi] - prefix[d, lo]
        lefts_before = prefix[d, ql] - prefix[d, lo]
        lefts_upto = prefix[d, qr] - prefix[d, lo]
        if r0 <= mid:
            b = mid
            hi = lo + node_lefts
            ql = lo + lefts_before
            qr = lo + lefts_upto
        else:
            total += lefts_upto - lefts_before
            a = mid
            new_lo = lo + node_lefts
            ql = new_lo + (ql - lo - lefts_before)
            qr = new_lo + (qr - lo - lefts_upto)
            lo = new_lo
        d += 1


@njit(cache=True)
def _sum_below_rank(prefix, sum_all, sum_left, n, ql, qr, r0):
    # sum of values among positions [ql, qr) whose rank is < r0.
    if r0 <= 0:
        return 0.0
    lo = 0
    hi = n
    a = 0
    b = n
    d = 0
    total = 0.0
    while True:
        if r0 <= a:
            return total
        if r0 >= b:
            return total + (sum_all[d, qr] - sum_all[d, ql])
        mid = a + (b - a) // 2
        node_lefts = prefix[d, hi] - prefix[d, lo]
        lefts_before = prefix[d, ql] - prefix[d, lo]
        lefts_upto = prefix[d, qr] - prefix[d, lo]
        if r0 <= mid:
            b = mid
            hi = lo + node_lefts
            ql = lo + lefts_before
            qr = lo + lefts_upto
        else:
            total += sum_left[d, qr] - sum_left[d, ql]
            a = mid
            new_lo = lo + node_lefts
            ql = new_lo + (ql - lo - lefts_before)
            qr = new_lo + (qr - lo - lefts_upto)
            lo = new_lo
        d += 1


class WaveletTree:
    """static k-th-smallest / quantile index over a fixed real sequence."""

    def __init__(self, values):
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInput("need a non-empty one-dimensional sequence")
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("values must be finite")
        n = arr.size
        order = np.argsort(arr, kind="stable")
        ranks = np.empty(n, dtype=np.int64)
        ranks[order] = np.arange(n, dtype=np.int64)
        depth = int(math.ceil(math.log2(n))) if n > 1 else 0
        prefix = np.zeros((depth, n + 1), dtype=np.int64)
        if depth:
            _build_levels(ranks, prefix)
        self.size = n
        self._ranks = ranks
        self._sorted = arr[order]
        self._prefix = prefix
        self._sums = None

    @property
    def count_entries(self) -> int:
        """number of stored count integers (the memory accounting unit)."""
        return int(self._prefix.size)

    def _check_range(self, l: int, r: int):
        if not (1 <= l <= r <= self.size):
            raise InvalidQuery(f"range ({l}, {r}) out of bounds for size {self.size}")

    def range_kth(self, l: int, r: int, k: int) -> float:
        """k-th smallest value among positions l..r (all 1-based, inclusive)."""
        self._check_range(l, r)
        if not (1 <= k <= r - l + 1):
            raise InvalidQuery(f"k={k} outside 1..{r - l + 1}")
        return float(_kth_query(self._prefix, self._sorted, self.size, l - 1, r, k))

    def range_quantile(self, l: int, r: int, q: float) -> float:
        """empirical q-quantile (inf{x: F_hat(x) >= q}) of positions l..r."""
        self._check_range(l, r)
        if not (0.0 < q <= 1.0):
            raise InvalidQuery(f"quantile level {q} outside (0, 1]")
        m = r - l + 1
        k = max(1, snap_ceil(m * q))
        return float(_kth_query(self._prefix, self._sorted, self.size, l - 1, r, k))

    def _loss_sums(self):
        # lazily built float companions for range check-loss evaluation; kept
        # out of count_entries on purpose (they are not counting state).
        if self._sums is None:
            depth = self._prefix.shape[0]
            n = self.size
            sum_all = np.zeros((depth + 1, n + 1), dtype=np.float64)
            sum_left = np.zeros((max(depth, 1), n + 1), dtype=np.float64)
            _build_sums(self._ranks, self._sorted, self._prefix, sum_all, sum_left)
            self._sums = (sum_all, sum_left)
        return self._sums


def build(values) -> WaveletTree:
    """construct a WaveletTree from a sequence of finite reals."""
    return WaveletTree(values)
