"""monte-carlo calibration of the local critical values q_alpha(m).

Draws are fully determined by (beta, system, m, n_reps, master_seed); the
level alpha only selects an order statistic, so different levels share
draws. Calibrated values can be persisted in an append-only text cache that
is byte-stable under re-runs.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import IntervalSystem, _max_stat, system_lengths
from .errors import CacheCorruption, InvalidInput, InvalidQuery
from .wavelet_tree import snap_ceil

MIN_REPS = 1000
RECOMMENDED_REPS = 5000

# draws are deterministic given the key, so one in-process memo serves every
# alpha and every re-calibration in a session
_draws_memo: dict = {}


@njit(cache=True)
def _stat_rows(bits2d, beta, lengths):
    n_rows = bits2d.shape[0]
    out = np.empty(n_rows, np.float64)
    for r in range(n_rows):
        out[r] = _max_stat(bits2d[r], beta, lengths)
    return out


def simulate_null_statistic(m: int, beta: float, system: IntervalSystem,
                            master_seed: int, rep: int = 0) -> float:
    """one draw of the null scan statistic over a window of m samples."""
    if m < 1:
        raise InvalidInput("window length must be >= 1")
    if not (0.0 < beta < 1.0):
        raise InvalidInput(f"quantile level {beta} outside (0, 1)")
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((master_seed, m, rep))))
    bits = (rng.random(m) < beta).astype(np.uint8)
    lengths = system_lengths(system, m)
    return float(_max_stat(bits, float(beta), lengths))


def _null_draws(m: int, beta: float, system: IntervalSystem,
                n_reps: int, master_seed: int) -> np.ndarray:
    key = (round(beta, 17), system.value, m, n_reps, master_seed)
    hit = _draws_memo.get(key)
    if hit is not None:
        return hit
    bits = np.empty((n_reps, m), dtype=np.uint8)
    for rep in range(n_reps):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((master_seed, m, rep))))
        bits[rep] = rng.random(m) < beta
    draws = _stat_rows(bits, float(beta), system_lengths(system, m))
    draws.sort()
    _draws_memo[key] = draws
    return draws


def _order_stat_index(n_reps: int, alpha: float) -> int:
    idx = snap_ceil(n_reps * (1.0 - alpha))
    return min(max(idx, 1), n_reps)


def fallback_bound(alpha: float, c: float) -> float:
    """deterministic upper envelope used beyond the calibrated grid."""
    if not (0.0 < alpha < 1.0):
        raise InvalidInput(f"alpha {alpha} outside (0, 1)")
    return float(c) + 2.0 * math.sqrt(2.0 * math.log(2.0 / alpha))


def _grid_for(n: int) -> np.ndarray:
    pts = set(range(1, min(n, 64) + 1))
    p = 1
    while p <= n:
        pts.add(p)
        p *= 2
    pts.add(n)
    return np.array(sorted(pts), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class CriticalValueTable:
    """calibrated q_alpha over a grid of window lengths, plus its fallback."""

    beta: float
    alpha: float
    system: IntervalSystem
    n_reps: int
    master_seed: int
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    fallback_c: float = 0.0

    @property
    def key(self) -> str:
        return (f"beta={self.beta:.17g},alpha={self.alpha:.17g},"
                f"system={self.system.value},n_reps={self.n_reps},"
                f"seed={self.master_seed}")

    def q(self, m: int) -> float:
        """critical value for a window of m samples; lookups round up to the
        next grid length, and lengths beyond the grid use the fallback."""
        if m < 1:
            raise InvalidQuery(f"window length {m} must be >= 1")
        idx = int(np.searchsorted(self.grid, m, side="left"))
        if idx < self.grid.size:
            return float(self.values[idx])
        return fallback_bound(self.alpha, self.fallback_c)

    @property
    def q_envelope(self) -> float:
        return float(self.values.max())


def _cache_line(beta, alpha, system, n_reps, master_seed, m, q) -> str:
    return (f"{beta:.17g},{alpha:.17g},{system.value},{n_reps},"
            f"{master_seed},{m},{q:.17g}\n")


def _load_cache(path: str) -> dict:
    records = {}
    if not os.path.exists(path):
        return records
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise CacheCorruption(f"{path}:{ln}: expected 7 fields")
            try:
                beta = float(parts[0])
                alpha = float(parts[1])
                system = parts[2]
                n_reps = int(parts[3])
                seed = int(parts[4])
                m = int(parts[5])
                q = float(parts[6])
            except ValueError as exc:
                raise CacheCorruption(f"{path}:{ln}: unparseable record") from exc
            key = (beta, alpha, system, n_reps, seed, m)
            if key in records and records[key] != q:
                raise CacheCorruption(
                    f"{path}:{ln}: conflicting values for key {key}")
            records[key] = q
    return records


def calibrate(n: int, beta: float, alpha: float,
              system: IntervalSystem = IntervalSystem.DYADIC,
              n_reps: int = RECOMMENDED_REPS, master_seed: int = 0,
              cache_path: str | None = None) -> CriticalValueTable:
    """calibrate critical values for every grid length up to n.

    Grid: all lengths 1..64, every power of two <= n, and n itself. Cached
    records matching (beta, alpha, system, n_reps, master_seed, m) are reused;
    missing ones are simulated and appended to the cache in grid order.
    """
    if n < 1:
        raise InvalidInput("series length must be >= 1")
    if not (0.0 < beta < 1.0):
        raise InvalidInput(f"quantile level {beta} outside (0, 1)")
    if not (0.0 < alpha < 1.0):
        raise InvalidInput(f"alpha {alpha} outside (0, 1)")
    if n_reps < MIN_REPS:
        raise InvalidInput(f"n_reps {n_reps} below the minimum {MIN_REPS}")
    if n_reps < RECOMMENDED_REPS:
        warnings.warn(
            f"n_reps={n_reps} below the recommended {RECOMMENDED_REPS}; "
            "critical values will be noisier", stacklevel=2)
    grid = _grid_for(n)
    cached = _load_cache(cache_path) if cache_path else {}
    idx = _order_stat_index(n_reps, alpha)
    values = np.empty(grid.size, dtype=np.float64)
    new_lines = []
    for gi, m in enumerate(grid):
        m = int(m)
        key = (float(beta), float(alpha), system.value, n_reps, master_seed, m)
        if key in cached:
            values[gi] = cached[key]
            continue
        draws = _null_draws(m, beta, system, n_reps, master_seed)
        q = float(draws[idx - 1])
        values[gi] = q
        new_lines.append(_cache_line(beta, alpha, system, n_reps,
                                     master_seed, m, q))
    if cache_path and new_lines:
        with open(cache_path, "a", encoding="ascii") as fh:
            fh.writelines(new_lines)
    return CriticalValueTable(
        beta=float(beta), alpha=float(alpha), system=system, n_reps=n_reps,
        master_seed=master_seed, grid=grid, values=values,
        fallback_c=float(values.max()))
