"""multiscale testing core: binary transform, binomial divergence, penalties,
the penalized scan statistic, and the count bounds it induces.

Everything numeric in the hot path funnels through the njit helpers `_g` and
`_stat_value`, so the simulation, the oracle-style statistic, and the
count-bound tables all round floats identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import InvalidInput
from .wavelet_tree import snap_ceil, snap_floor


class IntervalSystem(Enum):
    ALL = "all"
    DYADIC = "dyadic"


@dataclass(frozen=True)
class QuantileConfig:
    """quantile level(s), test level, and interval system for one fit."""

    betas: tuple
    alpha: float
    intervals: IntervalSystem = IntervalSystem.DYADIC
    mc_reps: int = 5000
    master_seed: int = 0

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        object.__setattr__(self, "betas", betas)
        if not betas:
            raise InvalidInput("need at least one quantile level")
        for b in betas:
            if not (0.0 < b < 1.0):
                raise InvalidInput(f"quantile level {b} outside (0, 1)")
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise InvalidInput("quantile levels must be strictly increasing")
        if not (0.0 < self.alpha < 1.0):
            raise InvalidInput(f"alpha {self.alpha} outside (0, 1)")
        if not isinstance(self.intervals, IntervalSystem):
            raise InvalidInput("intervals must be an IntervalSystem")
        if self.mc_reps < 1:
            raise InvalidInput("mc_reps must be positive")


class BoundPair(NamedTuple):
    u: float
    v: float


@njit(cache=True)
def _g(x, beta):
    # divergence of a Bernoulli(x) from Bernoulli(beta); strictly convex,
    # zero at x = beta, finite at the endpoints.
    if x <= 0.0:
        return -math.log(1.0 - beta)
    if x >= 1.0:
        return -math.log(beta)
    return x * math.log(x / beta) + (1.0 - x) * math.log((1.0 - x) / (1.0 - beta))


@njit(cache=True)
def _penalty(k, l):
    return math.sqrt(2.0 * (math.log(k / l) + 1.0))


@njit(cache=True)
def _stat_value(count, length, beta, pen):
    # penalized root log-likelihood of one window: shared by the null
    # simulation, the exhaustive statistic, and the count-bound search.
    return math.sqrt(2.0 * length * _g(count / length, beta)) - pen


@njit(cache=True)
def _max_stat(bits, beta, lengths):
    # exhaustive penalized scan over every window of the given lengths.
    m = bits.shape[0]
    cum = np.empty(m + 1, np.int64)
    cum[0] = 0
    for i in range(m):
        cum[i + 1] = cum[i] + bits[i]
    best = -np.inf
    for li in range(lengths.shape[0]):
        l = lengths[li]
        if l > m:
            continue
        pen = _penalty(float(m), float(l))
        lf = float(l)
        for s in range(m - l + 1):
            c = cum[s + l] - cum[s]
            v = _stat_value(float(c), lf, beta, pen)
            if v > best:
                best = v
    return best


def system_lengths(system: IntervalSystem, m: int) -> np.ndarray:
    """window lengths the system tests inside a span of m samples, ascending."""
    if m < 1:
        return np.empty(0, dtype=np.int64)
    if system is IntervalSystem.ALL:
        return np.arange(1, m + 1, dtype=np.int64)
    n_pows = int(math.floor(math.log2(m))) + 1
    return np.array([1 << p for p in range(n_pows)], dtype=np.int64)


def _check_beta(beta: float):
    if not (0.0 < beta < 1.0):
        raise InvalidInput(f"quantile level {beta} outside (0, 1)")


def g_beta(x: float, beta: float) -> float:
    """divergence between Bernoulli(x) and the null Bernoulli(beta)."""
    _check_beta(beta)
    if not (0.0 <= x <= 1.0):
        raise InvalidInput(f"proportion {x} outside [0, 1]")
    return float(_g(float(x), float(beta)))


def transform(values, theta: float) -> np.ndarray:
    """binary indicators 1{Z_i <= theta} for a candidate segment value."""
    arr = np.asarray(values, dtype=np.float64)
    return (arr <= theta).astype(np.uint8)


def local_log_likelihood(count: int, length: int, beta: float) -> float:
    """length * g_beta(count/length): the window log-likelihood ratio."""
    _check_beta(beta)
    if length < 1 or not (0 <= count <= length):
        raise InvalidInput(f"count {count} / length {length} invalid")
    return float(length) * float(_g(count / length, beta))

def penalty(k: int, l: int) -> float:
    """scale penalty sqrt(2 log(e k / l)) for a length-l window in a span of k."""
    if l < 1 or k < l:
        raise InvalidInput(f"penalty needs 1 <= l <= k, got k={k} l={l}")
    return float(_penalty(float(k), float(l)))


def multiscale_statistic(bits, beta: float,
                         intervals: IntervalSystem = IntervalSystem.ALL) -> float:
    """max over system windows of the penalized root likelihood statistic."""
    _check_beta(beta)
    arr = np.ascontiguousarray(bits, dtype=np.uint8)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput("need a non-empty bit sequence")
    if np.any(arr > 1):
        raise InvalidInput("bits must be 0/1")
    lengths = system_lengths(intervals, arr.size)
    return float(_max_stat(arr, float(beta), lengths))


def _bisect_g(target: float, lo: float, hi: float, beta: float,
              increasing: bool) -> float:
    # root of g(x) = target on [lo, hi], where g is monotone on that side.
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if hi - lo < 1e-12:
            break
        if (_g(mid, beta) < target) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def count_bounds(k: int, l: int, q: float, beta: float) -> BoundPair:
    """proportion bounds (u, v): window counts c with u <= c/l <= v pass the
    local test at critical value q inside a span of k samples.

    The threshold (q + penalty)^2 / (2l) is clamped at zero (then u = v =
    beta); at or beyond the divergence's endpoint values the bounds open up
    to 0 and/or 1.
    """
    _check_beta(beta)
    if l < 1 or k < l:
        raise InvalidInput(f"count_bounds needs 1 <= l <= k, got k={k} l={l}")
    qp = q + float(_penalty(float(k), float(l)))
    if qp <= 0.0:
        return BoundPair(beta, beta)
    qt = qp * qp / (2.0 * l)
    g0 = float(_g(0.0, beta))
    g1 = float(_g(1.0, beta))
    u = 0.0 if qt >= g0 else _bisect_g(qt, 0.0, beta, beta, increasing=False)
    v = 1.0 if qt >= g1 else _bisect_g(qt, beta, 1.0, beta, increasing=True)
    return BoundPair(float(u), float(v))


def count_index_range(l: int, bounds: BoundPair) -> tuple:
    """integer order-statistic indices (s, t) bracketing the passing counts,
    with the 1e-9 snap so near-integer products don't jitter: s = ceil(l*u)
    (0 means no lower constraint), t = floor(l*v) (l means no upper one)."""
    s = 0 if bounds.u <= 0.0 else snap_ceil(l * bounds.u)
    t = l if bounds.v >= 1.0 else snap_floor(l * bounds.v)
    return s, t


@njit(cache=True)
def _count_pass_range(l, beta, pen, q):
    # exact integer bracket of counts passing `stat - pen <= q`, evaluated
    # with the same float expression as the simulated statistic. Returns
    # (s, t); s > t means no count passes.
    lb = l * beta
    c_lo = int(math.floor(lb))
    c_hi = c_lo + 1
    if c_hi > l:
        c_hi = l
    if c_lo < 0:
        c_lo = 0
    lf = float(l)
    ok_lo = _stat_value(float(c_lo), lf, beta, pen) <= q
    ok_hi = _stat_value(float(c_hi), lf, beta, pen) <= q
    if not (ok_lo or ok_hi):
        return 1, 0
    if l <= 64:
        s = -1
        t = -1
        for c in range(l + 1):
            if _stat_value(float(c), lf, beta, pen) <= q:
                if s < 0:
                    s = c
                t = c
        return s, t
    # binary search each side; the pass set is contiguous around l*beta
    anchor = c_lo if ok_lo else c_hi
    lo, hi = 0, anchor
    while lo < hi:
        mid = (lo + hi) // 2
        if _stat_value(float(mid), lf, beta, pen) <= q:
            hi = mid
        else:
            lo = mid + 1
    s = lo
    lo, hi = anchor, l
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _stat_value(float(mid), lf, beta, pen) <= q:
            lo = mid
        else:
            hi = mid - 1
    return s, lo
