"""njit kernels for the segmentation dynamic program.

The DP assigns each boundary b in 0..n a layer (minimal number of segments
covering samples 1..b over feasible-only segmentations) and, within layers,
Bellman-minimizes total check loss. Targets are scanned ascending per layer;
for each target the candidate predecessor descends, growing the tested
segment interior leftward one sample at a time so per-window work is
incremental. Pruning rests on a conservative statistic with the size-n
penalty and a critical-value envelope: once it reports an interior
infeasible, every superset interior is too, which simultaneously kills the
descent (smaller predecessors) and, through a per-target barrier array, all
later targets for predecessors at or below the trigger.
"""

import math

import numpy as np
from numba import njit

from .core import _count_pass_range, _penalty, _stat_value  # noqa: F401
from .wavelet_tree import (_count_below_rank, _kth_query, _sum_below_rank)

NEG_INF = -np.inf
POS_INF = np.inf


@njit(cache=True)
def _snapceil_i(t):
    r = np.round(t)
    if abs(t - r) < 1e-9:
        return np.int64(r)
    return np.int64(math.ceil(t))


@njit(cache=True)
def _fill_st_tables(lengths, qvals, betas, s_tab, t_tab):
    # s_tab[lev, li, kp], valid for kp >= lengths[li]
    nlev = betas.shape[0]
    nd = lengths.shape[0]
    nmax = s_tab.shape[2]
    for lev in range(nlev):
        for li in range(nd):
            l = lengths[li]
            for kp in range(l, nmax):
                pen = _penalty(float(kp), float(l))
                s, t = _count_pass_range(l, betas[lev], pen, qvals[lev, kp])
                s_tab[lev, li, kp] = s
                t_tab[lev, li, kp] = t


@njit(cache=True)
def _fill_t0_tables(lengths, q_env, betas, n, s0, t0):
    nlev = betas.shape[0]
    nd = lengths.shape[0]
    for lev in range(nlev):
        for li in range(nd):
            l = lengths[li]
            pen0 = _penalty(float(n), float(l))
            s, t = _count_pass_range(l, betas[lev], pen0, q_env[lev])
            s0[lev, li] = s
            t0[lev, li] = t


@njit(cache=True)
def _fill_kth_rows(prefix, sorted_vals, n, row_len, row_ord, out):
    # out[r, p] = row_ord[r]-th smallest of zv[p .. p + row_len[r] - 1]
    for r in range(row_len.shape[0]):
        l = row_len[r]
        o = row_ord[r]
        for p in range(n - l + 1):
            out[r, p] = _kth_query(prefix, sorted_vals, n, p, p + l, o)


@njit(cache=True)
def _fit_theta(zv, prefix, sorted_vals, n, b, j, lo_bound, up_open, beta):
    # clamped empirical beta-quantile of zv[b:j]; up_open is an exclusive
    # upper bound, realized as the largest segment value strictly below it.
    qidx = _snapceil_i((j - b) * beta)
    if qidx < 1:
        qidx = 1
    theta = _kth_query(prefix, sorted_vals, n, b, j, qidx)
    if theta < lo_bound:
        return lo_bound
    if up_open < POS_INF and theta >= up_open:
        r0 = np.searchsorted(sorted_vals, up_open, side="left")
        c = _count_below_rank(prefix, n, b, j, r0)
        return _kth_query(prefix, sorted_vals, n, b, j, c)
    return theta


@njit(cache=True)
def _check_loss(prefix, sorted_vals, sum_all, sum_left, n, b, j, theta, beta):
    r0 = np.searchsorted(sorted_vals, theta, side="right")
    cnt = _count_below_rank(prefix, n, b, j, r0)
    sm = _sum_below_rank(prefix, sum_all, sum_left, n, b, j, r0)
    total = sum_all[0, j] - sum_all[0, b]
    above = (total - sm) - theta * (j - b - cnt)
    below = theta * cnt - sm
    return beta * above + (1.0 - beta) * below


@njit(cache=True)
def muscle_dp(zv, prefix, sorted_vals, sum_all, sum_left,
              lengths, s_tab, t_tab, s0, t0, betas,
              use_kth, kth_rows, srow, trow, s0row, t0row, dead0_len,
              pruning, layer, cost, pred):
    n = zv.shape[0]
    nlev = betas.shape[0]
    nd = lengths.shape[0]

    for i in range(n + 1):
        layer[i] = -1
        pred[i] = -1
        cost[i] = POS_INF
    layer[0] = 0
    cost[0] = 0.0

    sources = np.empty(n + 1, np.int64)
    max_bad_b = np.full(n + 1, -1, np.int64)

    cur_s = np.empty((nlev, nd), np.int64)
    cur_t = np.empty((nlev, nd), np.int64)
    ls_arr = np.empty((nlev, nd), np.float64)
    us_arr = np.empty((nlev, nd), np.float64)
    l0 = np.empty(nlev, np.float64)
    u0 = np.empty(nlev, np.float64)
    deadcnt = np.empty(nlev, np.int64)
    tmp_lo = np.empty(nlev, np.float64)
    tmp_up = np.empty(nlev, np.float64)

    current = 0
    while layer[n] < 0:
        n_src = 0
        for b in range(n):
            if layer[b] == current:
                sources[n_src] = b
                n_src += 1
        if n_src == 0:
            current += 1
            continue
        max_src = sources[n_src - 1]
        barrier = -1
        for j in range(1, n + 1):
            if pruning and max_bad_b[j] > barrier:
                barrier = max_bad_b[j]
            if layer[j] >= 0:
                continue
            if pruning and barrier >= max_src:
                break
            blo = barrier + 1 if pruning else 0
            segmin = zv[j - 1]
            for lev in range(nlev):
                l0[lev] = NEG_INF
                u0[lev] = POS_INF
                deadcnt[lev] = 0
            best_cost = POS_INF
            best_pred = -1
            found = False
            for b in range(j - 1, blo - 1, -1):
                kp = j - b - 1
                if kp >= 1:
                    if zv[b] < segmin:
                        segmin = zv[b]
                    p_new = b + 1
                    for li in range(nd):
                        l = lengths[li]
                        if l > kp:
                            break
                        first = l == kp
                        p_hi = j - l  # last valid window start
                        if pruning:
                            for lev in range(nlev):
                                o = s0[lev, li]
                                if 0 < o <= t0[lev, li]:
                                    if use_kth:
                                        v = kth_rows[s0row[lev, li], p_new]
                                    else:
                                        v = _kth_query(prefix, sorted_vals, n,
                                                       p_new, p_new + l, o)
                                    if v > l0[lev]:
                                        l0[lev] = v
                                o = t0[lev, li]
                                if o < l and o >= s0[lev, li]:
                                    if use_kth:
                                        v = kth_rows[t0row[lev, li], p_new]
                                    else:
                                        v = _kth_query(prefix, sorted_vals, n,
                                                       p_new, p_new + l, o + 1)
                                    if v < u0[lev]:
                                        u0[lev] = v
                        for lev in range(nlev):
                            ns = s_tab[lev, li, kp]
                            nt = t_tab[lev, li, kp]
                            if first or ns != cur_s[lev, li] or nt != cur_t[lev, li]:
                                if not first and cur_s[lev, li] > cur_t[lev, li]:
                                    deadcnt[lev] -= 1
                                cur_s[lev, li] = ns
                                cur_t[lev, li] = nt
                                if ns > nt:
                                    deadcnt[lev] += 1
                                    ls_arr[lev, li] = NEG_INF
                                    us_arr[lev, li] = POS_INF
                                else:
                                    lv = NEG_INF
                                    uv = POS_INF
                                    if ns >= 1:
                                        if use_kth:
                                            rr = srow[lev, li, kp]
                                            for p2 in range(p_new, p_hi + 1):
                                                v = kth_rows[rr, p2]
                                                if v > lv:
                                                    lv = v
                                        else:
                                            for p2 in range(p_new, p_hi + 1):
                                                v = _kth_query(
                                                    prefix, sorted_vals, n,
                                                    p2, p2 + l, ns)
                                                if v > lv:
                                                    lv = v
                                    if nt < l:
                                        if use_kth:
                                            rr = trow[lev, li, kp]
                                            for p2 in range(p_new, p_hi + 1):
                                                v = kth_rows[rr, p2]
                                                if v < uv:
                                                    uv = v
                                        else:
                                            for p2 in range(p_new, p_hi + 1):
                                                v = _kth_query(
                                                    prefix, sorted_vals, n,
                                                    p2, p2 + l, nt + 1)
                                                if v < uv:
                                                    uv = v
                                    ls_arr[lev, li] = lv
                                    us_arr[lev, li] = uv
                            elif ns <= nt:
                                if ns >= 1:
                                    if use_kth:
                                        v = kth_rows[srow[lev, li, kp], p_new]
                                    else:
                                        v = _kth_query(prefix, sorted_vals, n,
                                                       p_new, p_new + l, ns)
                                    if v > ls_arr[lev, li]:
                                        ls_arr[lev, li] = v
                                if nt < l:
                                    if use_kth:
                                        v = kth_rows[trow[lev, li, kp], p_new]
                                    else:
                                        v = _kth_query(prefix, sorted_vals, n,
                                                       p_new, p_new + l, nt + 1)
                                    if v < us_arr[lev, li]:
                                        us_arr[lev, li] = v
                    if pruning:
                        bad = kp >= dead0_len
                        if not bad:
                            for lev in range(nlev):
                                if l0[lev] >= u0[lev]:
                                    bad = True
                                    break
                        if bad:
                            if b > max_bad_b[j]:
                                max_bad_b[j] = b
                            break
                if layer[b] != current:
                    continue
                # real feasibility verdict for the edge (b -> j)
                feasible = True
                for lev in range(nlev):
                    if deadcnt[lev] > 0:
                        feasible = False
                        break
                    lo_b = NEG_INF
                    up_b = POS_INF
                    for li in range(nd):
                        l = lengths[li]
                        if l > kp:
                            break
                        if cur_s[lev, li] >= 1 and ls_arr[lev, li] > lo_b:
                            lo_b = ls_arr[lev, li]
                        if cur_t[lev, li] < l and us_arr[lev, li] < up_b:
                            up_b = us_arr[lev, li]
                    cand = lo_b if lo_b > NEG_INF else segmin
                    if not cand < up_b:
                        feasible = False
                        break
                    tmp_lo[lev] = lo_b
                    tmp_up[lev] = up_b
                if not feasible:
                    continue
                c2 = cost[b]
                for lev in range(nlev):
                    theta = _fit_theta(zv, prefix, sorted_vals, n, b, j,
                                       tmp_lo[lev], tmp_up[lev], betas[lev])
                    c2 += _check_loss(prefix, sorted_vals, sum_all, sum_left,
                                      n, b, j, theta, betas[lev])
                if (not found) or c2 <= best_cost:
                    best_cost = c2
                    best_pred = b
                    found = True
            if found:
                layer[j] = current + 1
                cost[j] = best_cost
                pred[j] = best_pred
        current += 1
