"""segmentation by dynamic programming over locally tested segments.

A segmentation is accepted when every segment's interior passes the
multiscale quantile test at its locally calibrated critical value; among all
accepted segmentations the fit minimizes first the number of change points,
then the total check loss. Variants: muscle_s (split / refit-across-splits /
merge, for long series) and m_muscle (several quantile levels at once, with
per-level critical values at alpha/m).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .calibration import CriticalValueTable
from .core import IntervalSystem, QuantileConfig, _count_pass_range, _penalty, system_lengths
from .errors import InfeasibleSegment, InvalidInput, InvalidQuery
from .wavelet_tree import WaveletTree

NEG_INF = float("-inf")
POS_INF = float("inf")


class FeasibleInterval(NamedTuple):
    """candidate segment values surviving every local window test.

    feasible iff lower <= upper; an infeasible segment is canonically
    (+inf, -inf) when no lower witness exists.
    """

    lower: float
    upper: float


@dataclass(frozen=True, eq=True)
class Segmentation:
    """piecewise-constant quantile fit: segment starts, per-level values."""

    k_hat: int
    boundaries: tuple          # 1-based segment start indices, first is 1
    values: tuple              # per segment: tuple of one value per level
    total_loss: float
    level_violations: tuple = ()

    def fractions(self, n: int) -> tuple:
        """change point locations as fractions t/n (excluding the start)."""
        return tuple((b - 1) / n for b in self.boundaries[1:])


def _as_series(values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput("need a non-empty one-dimensional series")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("series values must be finite")
    return arr


def _check_table(table: CriticalValueTable, beta: float, alpha: float,
                 config: QuantileConfig):
    if table.system is not config.intervals:
        raise InvalidInput("table interval system does not match config")
    if table.beta != beta:
        raise InvalidInput(
            f"table beta {table.beta} does not match requested {beta}")
    if abs(table.alpha - alpha) > 1e-12:
        raise InvalidInput(
            f"table alpha {table.alpha} does not match requested {alpha}")
    if table.n_reps != config.mc_reps:
        raise InvalidInput("table n_reps does not match config mc_reps")
    if table.master_seed != config.master_seed:
        raise InvalidInput("table master_seed does not match config")


def segment_feasibility(series, tree: WaveletTree, i: int, j: int,
                        table: CriticalValueTable,
                        config: QuantileConfig) -> FeasibleInterval:
    """feasible candidate values for the segment covering samples i..j.

    The tested window is the segment interior i+1..j; an empty interior is
    vacuously feasible. Every system window inside the interior restricts the
    candidate through its passing-count order statistics; the returned
    interval intersects those restrictions, closing the open upper end at the
    largest segment data value below it.
    """
    zv = _as_series(series)
    n = zv.size
    if tree.size != n:
        raise InvalidInput("tree was built over a different series length")
    if not (1 <= i <= j <= n):
        raise InvalidQuery(f"segment ({i}, {j}) out of range for n={n}")
    if i == j:
        return FeasibleInterval(NEG_INF, POS_INF)
    kp = j - i
    beta = float(table.beta)
    q = table.q(kp)
    lo_b = NEG_INF
    up_open = POS_INF
    for l in system_lengths(config.intervals, kp):
        l = int(l)
        pen = float(_penalty(float(kp), float(l)))
        s, t = _count_pass_range(l, beta, pen, q)
        if s > t:
            return FeasibleInterval(POS_INF, NEG_INF)
        if s < 1 and t >= l:
            continue
        for start in range(i + 1, j - l + 2):
            if s >= 1:
                v = tree.range_kth(start, start + l - 1, s)
                if v > lo_b:
                    lo_b = v
            if t < l:
                v = tree.range_kth(start, start + l - 1, t + 1)
                if v < up_open:
                    up_open = v
    seg = zv[i - 1:j]
    cand = lo_b if lo_b > NEG_INF else float(seg.min())
    if up_open == POS_INF:
        upper = POS_INF
    else:
        below = seg[seg < up_open]
        upper = float(below.max()) if below.size else NEG_INF
    if lo_b == NEG_INF and not cand < up_open:
        return FeasibleInterval(POS_INF, NEG_INF)
    return FeasibleInterval(lo_b, upper)


def fit_segment_value(series, tree: WaveletTree, i: int, j: int,
                      feasible: FeasibleInterval, beta: float) -> float:
    """empirical beta-quantile of samples i..j clamped into the feasible
    interval (the check loss is convex piecewise-linear, so the clamp is
    optimal among attainable values)."""
    if feasible.lower > feasible.upper:
        raise InfeasibleSegment(f"segment ({i}, {j}) has no feasible value")
    q_hat = tree.range_quantile(i, j, beta)
    return float(min(max(q_hat, feasible.lower), feasible.upper))


def _np_check_loss(seg: np.ndarray, theta: float, beta: float) -> float:
    below = seg <= theta
    above_part = float(np.sum(seg[~below] - theta))
    below_part = float(np.sum(theta - seg[below]))
    return beta * above_part + (1.0 - beta) * below_part


def _run_dp(zv: np.ndarray, tree: WaveletTree, betas: Sequence[float],
            tables: Sequence[CriticalValueTable], system: IntervalSystem,
            pruning: bool) -> list:
    n = zv.size
    nlev = len(betas)
    betas_arr = np.asarray(betas, dtype=np.float64)
    lengths = system_lengths(system, n - 1)
    nd = lengths.size

    qvals = np.zeros((nlev, max(n, 2)), dtype=np.float64)
    for lev, tab in enumerate(tables):
        for kp in range(1, n):
            qvals[lev, kp] = tab.q(kp)

    s_tab = np.zeros((nlev, nd, n), dtype=np.int64)
    t_tab = np.zeros((nlev, nd, n), dtype=np.int64)
    s0 = np.zeros((nlev, nd), dtype=np.int64)
    t0 = np.zeros((nlev, nd), dtype=np.int64)
    if nd:
        _kernels._fill_st_tables(lengths, qvals, betas_arr, s_tab, t_tab)
        q_env = np.array([tab.q_envelope for tab in tables], dtype=np.float64)
        _kernels._fill_t0_tables(lengths, q_env, betas_arr, n, s0, t0)

    dead0_len = n + 10
    for lev in range(nlev):
        for li in range(nd):
            if s0[lev, li] > t0[lev, li] and lengths[li] < dead0_len:
                dead0_len = int(lengths[li])

    use_kth = nd > 0 and not (system is IntervalSystem.ALL and n > 1024)
    srow = np.full((nlev, max(nd, 1), max(n, 1)), -1, dtype=np.int32)
    trow = np.full_like(srow, -1)
    s0row = np.full((nlev, max(nd, 1)), -1, dtype=np.int32)
    t0row = np.full_like(s0row, -1)
    kth_rows = np.zeros((1, 1), dtype=np.float64)
    if use_kth:
        rows: dict = {}
        row_len: list = []
        row_ord: list = []

        def row_of(li: int, o: int) -> int:
            key = (li, o)
            rid = rows.get(key)
            if rid is None:
                rid = len(rows)
                rows[key] = rid
                row_len.append(int(lengths[li]))
                row_ord.append(o)
            return rid

        for lev in range(nlev):
            for li in range(nd):
                l = int(lengths[li])
                st_l = s_tab[lev, li]
                tt_l = t_tab[lev, li]
                for kp in range(l, n):
                    s = int(st_l[kp])
                    t = int(tt_l[kp])
                    if s > t:
                        continue
                    if s >= 1:
                        srow[lev, li, kp] = row_of(li, s)
                    if t < l:
                        trow[lev, li, kp] = row_of(li, t + 1)
                s = int(s0[lev, li])
                t = int(t0[lev, li])
                if s <= t:
                    if s >= 1:
                        s0row[lev, li] = row_of(li, s)
                    if t < l:
                        t0row[lev, li] = row_of(li, t + 1)
        if rows:
            kth_rows = np.empty((len(rows), n), dtype=np.float64)
            _kernels._fill_kth_rows(
                tree._prefix, tree._sorted, n,
                np.asarray(row_len, dtype=np.int64),
                np.asarray(row_ord, dtype=np.int64), kth_rows)
        else:
            use_kth = False

    sum_all, sum_left = tree._loss_sums()
    layer = np.empty(n + 1, dtype=np.int64)
    cost = np.empty(n + 1, dtype=np.float64)
    pred = np.empty(n + 1, dtype=np.int64)
    _kernels.muscle_dp(zv, tree._prefix, tree._sorted, sum_all, sum_left,
                       lengths, s_tab, t_tab, s0, t0, betas_arr,
                       use_kth, kth_rows, srow, trow, s0row, t0row,
                       dead0_len, pruning, layer, cost, pred)
    chain = [n]
    cur = n
    while cur > 0:
        cur = int(pred[cur])
        chain.append(cur)
    chain.reverse()
    return chain


def _assemble(zv: np.ndarray, tree: WaveletTree, chain: list,
              betas: Sequence[float], tables: Sequence[CriticalValueTable],
              config: QuantileConfig) -> Segmentation:
    starts = tuple(b + 1 for b in chain[:-1])
    values = []
    total = 0.0
    violations = []
    for k in range(len(chain) - 1):
        st = chain[k] + 1
        en = chain[k + 1]
        seg = zv[st - 1:en]
        per_level = []
        for beta, tab in zip(betas, tables):
            fi = segment_feasibility(zv, tree, st, en, tab, config)
            theta = fit_segment_value(zv, tree, st, en, fi, beta)
            per_level.append(theta)
            total += _np_check_loss(seg, theta, beta)
        if any(b2 < b1 for b1, b2 in zip(per_level, per_level[1:])):
            violations.append(k)
        values.append(tuple(per_level))
    return Segmentation(
        k_hat=len(starts) - 1, boundaries=starts, values=tuple(values),
        total_loss=float(total), level_violations=tuple(violations))


def muscle(series, config: QuantileConfig, table: CriticalValueTable,
           pruning: bool = True) -> Segmentation:
    """segmentation with the fewest change points whose every segment passes
    its local test, minimizing total check loss among those."""
    zv = _as_series(series)
    if len(config.betas) != 1:
        raise InvalidInput("muscle fits one quantile level; see m_muscle")
    beta = config.betas[0]
    _check_table(table, beta, config.alpha, config)
    tree = WaveletTree(zv)
    chain = _run_dp(zv, tree, [beta], [table], config.intervals, pruning)
    return _assemble(zv, tree, chain, [beta], [table], config)


def m_muscle(series, config: QuantileConfig,
             tables: Sequence[CriticalValueTable],
             pruning: bool = True) -> Segmentation:
    """simultaneous fit at m quantile levels; a segment is kept only when
    every level's interior test passes at level alpha/m, and the cost is the
    summed per-level check loss."""
    zv = _as_series(series)
    betas = list(config.betas)
    m = len(betas)
    if len(tables) != m:
        raise InvalidInput(f"need {m} tables, got {len(tables)}")
    for beta, tab in zip(betas, tables):
        _check_table(tab, beta, config.alpha / m, config)
    tree = WaveletTree(zv)
    chain = _run_dp(zv, tree, betas, tables, config.intervals, pruning)
    return _assemble(zv, tree, chain, betas, tables, config)


def _piece_spans(n: int, piece_size: int) -> list:
    spans = []
    start = 0
    while start < n:
        end = min(start + piece_size, n)
        if n - end < piece_size / 2:
            end = n
        spans.append((start, end))
        start = end
    return spans


def muscle_s(series, config: QuantileConfig, table: CriticalValueTable,
             piece_size: int = 300, pruning: bool = True) -> Segmentation:
    """split the series into pieces, fit each independently, then refit
    across every split boundary (the union of the two adjacent estimated
    segments) and splice; fitted values are recomputed per final segment."""
    zv = _as_series(series)
    if piece_size < 2:
        raise InvalidInput("piece_size must be >= 2")
    if len(config.betas) != 1:
        raise InvalidInput("muscle_s fits one quantile level")
    beta = config.betas[0]
    _check_table(table, beta, config.alpha, config)
    n = zv.size
    spans = _piece_spans(n, piece_size)
    if len(spans) == 1:
        return muscle(zv, config, table, pruning=pruning)

    def fit_piece(a: int, b: int) -> list:
        seg = muscle(zv[a:b], config, table, pruning=pruning)
        return [a + s - 1 for s in seg.boundaries]  # 0-based segment starts

    acc = fit_piece(*spans[0])
    acc_end = spans[0][1]
    for a, b in spans[1:]:
        nxt = fit_piece(a, b)
        union_start = acc[-1]            # start of last accepted segment
        first_end = nxt[1] if len(nxt) > 1 else b  # end of next piece's first segment
        refit = muscle(zv[union_start:first_end], config, table,
                       pruning=pruning)
        refit_starts = [union_start + s - 1 for s in refit.boundaries]
        acc = acc[:-1] + refit_starts + nxt[1:]
        acc_end = b
    assert acc_end == n
    tree = WaveletTree(zv)
    bounds = acc + [n]
    starts = tuple(s + 1 for s in acc)
    values = []
    total = 0.0
    for k in range(len(bounds) - 1):
        st = bounds[k] + 1
        en = bounds[k + 1]
        seg = zv[st - 1:en]
        fi = segment_feasibility(zv, tree, st, en, table, config)
        if fi.lower <= fi.upper:
            theta = fit_segment_value(zv, tree, st, en, fi, beta)
        else:
            theta = float(tree.range_quantile(st, en, beta))
        values.append((theta,))
        total += _np_check_loss(seg, theta, beta)
    return Segmentation(
        k_hat=len(starts) - 1, boundaries=starts, values=tuple(values),
        total_loss=float(total))
