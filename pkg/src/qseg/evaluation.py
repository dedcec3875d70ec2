"""Simulation scenarios, accuracy metrics, and the repeated-experiment runner.

Scenario signals are piecewise constant on the grid x_i = (i-1)/n; all noise
recipes have median zero so the beta=0.5 quantile function equals the signal.
Metrics follow the usual change-point conventions: distances between change
point sets as fractions of n, false-discovery window matching, overestimation
ratio, integrated errors of the fitted step function, and the entropy-based
V-measure of the induced sample clustering.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2

from .calibration import calibrate
from .core import IntervalSystem, QuantileConfig
from .errors import InvalidInput
from .segmentation import Segmentation, m_muscle, muscle, muscle_s

CHI2_3_MEDIAN = float(chi2(3).median())

# four-block layout (as fractions of the series) used by the heterogeneous
# noise recipes; at n = 2048 the breaks fall at samples 389, 666, 1445
_NOISE_BLOCKS = (389 / 2048, 666 / 2048, 1445 / 2048)


def _block_masks(n: int):
    idx = np.arange(1, n + 1)
    r1 = round(n * _NOISE_BLOCKS[0])
    r2 = round(n * _NOISE_BLOCKS[1])
    r3 = round(n * _NOISE_BLOCKS[2])
    return (idx <= r1, (idx > r1) & (idx <= r2), (idx > r2) & (idx <= r3),
            idx > r3)


def _blockwise_scale(n: int, scales) -> np.ndarray:
    out = np.empty(n)
    for mask, s in zip(_block_masks(n), scales):
        out[mask] = s
    return out


def _noise_none(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.zeros(n)


def _noise_gauss_std(rng, n):
    return rng.standard_normal(n)


def _noise_gauss_e1(rng, n):
    return math.sqrt(0.9) * rng.standard_normal(n)


def _noise_t3_e2(rng, n):
    return 2 ** -0.5 * _blockwise_scale(n, (8, 0.5, 4, 1)) * rng.standard_t(3, n)


def _noise_cauchy_e3(rng, n):
    return _blockwise_scale(n, (0.6, 0.05, 0.6, 0.2)) * rng.standard_cauchy(n)


def _noise_chi2_e4(rng, n):
    centered = rng.chisquare(3, n) - CHI2_3_MEDIAN
    return 6 ** -0.5 * _blockwise_scale(n, (6, 0.5, 6, 2)) * centered


def _noise_mixed_e5(rng, n):
    m1, m2, m3, m4 = _block_masks(n)
    out = np.empty(n)
    out[m1] = 8.0 * rng.standard_normal(m1.sum())
    out[m2] = rng.standard_t(3, m2.sum()) / (2 * math.sqrt(3))
    out[m3] = 4 / math.sqrt(6) * (rng.chisquare(3, m3.sum()) - CHI2_3_MEDIAN)
    out[m4] = 0.1 * rng.standard_cauchy(m4.sum())
    return out


def _noise_t3_unit(rng, n):
    return rng.standard_t(3, n) / math.sqrt(3)


def _noise_window_mix(rng, n):
    out = np.empty(n)
    cut = min(100, n)
    out[:cut] = rng.standard_normal(cut)
    out[cut:] = rng.standard_t(3, n - cut) / (2 * math.sqrt(3))
    return out


NOISE_RECIPES: dict = {
    "none": _noise_none,
    "gauss_std": _noise_gauss_std,
    "gauss_e1": _noise_gauss_e1,
    "t3_scaled": _noise_t3_e2,
    "cauchy_scaled": _noise_cauchy_e3,
    "chi2_scaled": _noise_chi2_e4,
    "mixed": _noise_mixed_e5,
    "t3_unit": _noise_t3_unit,
    "window_mix": _noise_window_mix,
}


@dataclass(frozen=True)
class Scenario:
    """piecewise-constant median signal plus a named noise recipe."""

    name: str
    n: int
    taus: tuple                  # change point fractions, strictly increasing
    values: tuple                # one level per segment (K + 1 of them)
    noise: str

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInput("scenario needs n >= 1")
        taus = tuple(float(t) for t in self.taus)
        if any(not 0.0 < t < 1.0 for t in taus):
            raise InvalidInput("change point fractions must lie in (0, 1)")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise InvalidInput("change point fractions must increase strictly")
        if len(self.values) != len(taus) + 1:
            raise InvalidInput(
                f"need {len(taus) + 1} segment values, got {len(self.values)}")
        if any(a == b for a, b in zip(self.values, self.values[1:])):
            raise InvalidInput("adjacent segment values must differ")
        if self.noise not in NOISE_RECIPES:
            raise InvalidInput(f"unknown noise recipe {self.noise!r}")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def k(self) -> int:
        return len(self.taus)

    def signal(self) -> np.ndarray:
        f = np.empty(self.n)
        edges = [0] + [math.ceil(self.n * t) for t in self.taus] + [self.n]
        for k, v in enumerate(self.values):
            f[edges[k]:edges[k + 1]] = v
        return f


_BLOCKS_TAUS = tuple(c / 2048 for c in
                     (205, 267, 308, 472, 512, 820, 902, 1332, 1557, 1598, 1659))
_BLOCKS_VALUES = (0.0, 14.64, -3.66, 7.32, -7.32, 10.98, -4.39, 3.29, 19.03,
                  7.68, 15.37, 0.0)

SCENARIOS: dict = {
    "E1": Scenario("E1", 2000, (986 / 2000, 1016 / 2000), (-4.0, 0.0, 4.0),
                   "gauss_e1"),
    "E2": Scenario("E2", 2048, _BLOCKS_TAUS, _BLOCKS_VALUES, "t3_scaled"),
    "E3": Scenario("E3", 2048, _BLOCKS_TAUS, _BLOCKS_VALUES, "cauchy_scaled"),
    "E4": Scenario("E4", 2048, _BLOCKS_TAUS, _BLOCKS_VALUES, "chi2_scaled"),
    "E5": Scenario("E5", 2048, _BLOCKS_TAUS, _BLOCKS_VALUES, "mixed"),
    "blocks": Scenario("blocks", 2048, _BLOCKS_TAUS, _BLOCKS_VALUES,
                       "gauss_std"),
    "teeth": Scenario("teeth", 2000, tuple(k / 81 for k in range(1, 81)),
                      tuple(3.0 * (k % 2) for k in range(81)), "t3_unit"),
    "windowing": Scenario("windowing", 400, (0.05, 0.1, 0.6, 0.725),
                          (0.0, 2.0, 0.0, -2.0, 1.0), "window_mix"),
}


def generate(scenario: Scenario, seed) -> tuple:
    """one draw of the scenario: returns (observations, true signal)."""
    if not isinstance(scenario, Scenario):
        raise InvalidInput("expected a Scenario")
    rng = np.random.default_rng(seed)
    f = scenario.signal()
    return f + NOISE_RECIPES[scenario.noise](rng, scenario.n), f


def localization_error(true_taus, est_taus) -> float:
    """max over true change points of the distance to the nearest estimate;
    1.0 when the estimate is empty."""
    t = np.asarray(true_taus, dtype=float)
    if t.size == 0:
        raise InvalidInput("true change point set must be nonempty")
    e = np.asarray(est_taus, dtype=float)
    if e.size == 0:
        return 1.0
    return float(np.max([np.min(np.abs(e - tk)) for tk in t]))


def hausdorff(true_taus, est_taus) -> float:
    t = np.asarray(true_taus, dtype=float)
    e = np.asarray(est_taus, dtype=float)
    if t.size == 0 and e.size == 0:
        return 0.0
    if t.size == 0 or e.size == 0:
        return 1.0
    return max(localization_error(t, e), localization_error(e, t))


def fdr_sample(true_taus, est_taus) -> tuple:
    """(false discovery count, FD / (k_hat + 1)); a discovery tau_i is true
    when some true change point lies in [(tau_{i-1}+tau_i)/2, (tau_i+tau_{i+1})/2)."""
    t = np.asarray(true_taus, dtype=float)
    e = np.sort(np.asarray(est_taus, dtype=float))
    k_hat = e.size
    if k_hat == 0:
        return 0, 0.0
    ext = np.concatenate(([0.0], e, [1.0]))
    fd = 0
    for i in range(1, k_hat + 1):
        lo = (ext[i - 1] + ext[i]) / 2
        hi = (ext[i] + ext[i + 1]) / 2
        if not np.any((t >= lo) & (t < hi)):
            fd += 1
    return fd, fd / (k_hat + 1)


def oer_sample(k_true: int, k_hat: int) -> float:
    return max(k_hat - k_true, 0) / max(k_hat, 1)


def mise_miae(f_true, f_hat) -> tuple:
    ft = np.asarray(f_true, dtype=float)
    fh = np.asarray(f_hat, dtype=float)
    if ft.shape != fh.shape:
        raise InvalidInput("signals must share the evaluation grid")
    diff = fh - ft
    return float(np.mean(diff ** 2)), float(np.mean(np.abs(diff)))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def v_measure(labels_true, labels_est) -> float:
    """harmonic mean of entropy-based homogeneity and completeness."""
    lt = np.asarray(labels_true)
    le = np.asarray(labels_est)
    if lt.shape != le.shape or lt.ndim != 1 or lt.size == 0:
        raise InvalidInput("need two equal-length label vectors")
    _, ti = np.unique(lt, return_inverse=True)
    _, ei = np.unique(le, return_inverse=True)
    nt, ne = ti.max() + 1, ei.max() + 1
    cont = np.zeros((nt, ne))
    np.add.at(cont, (ti, ei), 1.0)
    h_true = _entropy(cont.sum(axis=1))
    h_est = _entropy(cont.sum(axis=0))
    # conditional entropies from the contingency table
    n = cont.sum()
    h_true_given_est = 0.0
    h_est_given_true = 0.0
    for j in range(ne):
        col = cont[:, j]
        tot = col.sum()
        if tot > 0:
            h_true_given_est += tot / n * _entropy(col)
    for i in range(nt):
        row = cont[i]
        tot = row.sum()
        if tot > 0:
            h_est_given_true += tot / n * _entropy(row)
    hom = 1.0 if h_true == 0.0 else 1.0 - h_true_given_est / h_true
    com = 1.0 if h_est == 0.0 else 1.0 - h_est_given_true / h_est
    if hom + com == 0.0:
        return 0.0
    return 2.0 * hom * com / (hom + com)


def labels_from_starts(n: int, starts) -> np.ndarray:
    """segment id per sample from 1-based segment start indices."""
    lab = np.zeros(n, dtype=np.int64)
    for s in starts:
        if s > 1:
            lab[s - 1:] += 1
    return lab


@dataclass(frozen=True)
class MetricsReport:
    k_hat: int
    d: float
    d_hausdorff: float
    fd: int
    fdr: float
    oer: float
    mise: float
    miae: float
    v: float
    runtime_ms: float


_METRIC_FIELDS = ("k_hat", "d", "d_hausdorff", "fd", "fdr", "oer", "mise",
                  "miae", "v", "runtime_ms")

CSV_HEADER = ("scenario", "rep", "seed", "k_hat", "d", "d_H", "fd", "fdr",
              "oer", "mise", "miae", "vmeasure", "runtime_ms")


def score_fit(scenario: Scenario, seg: Segmentation, f_true: np.ndarray,
              runtime_ms: float, median_level: int = 0) -> MetricsReport:
    n = scenario.n
    est_taus = seg.fractions(n)
    f_hat = np.empty(n)
    bounds = list(seg.boundaries) + [n + 1]
    for k in range(len(seg.boundaries)):
        f_hat[bounds[k] - 1:bounds[k + 1] - 1] = seg.values[k][median_level]
    d = localization_error(scenario.taus, est_taus) if scenario.taus else 0.0
    dh = hausdorff(scenario.taus, est_taus)
    fd, fdr = fdr_sample(scenario.taus, est_taus)
    mise, miae = mise_miae(f_true, f_hat)
    v = v_measure(labels_from_starts(n, (1,) + tuple(
        math.ceil(n * t) + 1 for t in scenario.taus)),
        labels_from_starts(n, seg.boundaries))
    return MetricsReport(k_hat=seg.k_hat, d=d, d_hausdorff=dh, fd=fd, fdr=fdr,
                         oer=oer_sample(scenario.k, seg.k_hat), mise=mise,
                         miae=miae, v=v, runtime_ms=runtime_ms)


@dataclass(frozen=True)
class ExperimentResult:
    scenario: str
    method: str
    alpha: float
    reps: tuple          # MetricsReport per repetition
    seeds: tuple

    def metric_vector(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reps], dtype=float)

    def aggregates(self) -> dict:
        """per metric: (median, mean absolute deviation around the median)."""
        out = {}
        for name in _METRIC_FIELDS:
            v = self.metric_vector(name)
            med = float(np.median(v))
            out[name] = (med, float(np.mean(np.abs(v - med))))
        return out

    def csv_rows(self) -> list:
        rows = [list(CSV_HEADER)]
        for i, (r, s) in enumerate(zip(self.reps, self.seeds)):
            rows.append([self.scenario, str(i), str(s), str(r.k_hat)]
                        + [f"{getattr(r, f):.10g}" for f in _METRIC_FIELDS[1:]])
        agg = self.aggregates()
        rows.append([self.scenario, "aggregate", ""]
                    + [f"{agg[f][0]:.6g} ({agg[f][1]:.4g})"
                       for f in _METRIC_FIELDS])
        return rows


def run_experiment(scenario: Scenario, method: str = "muscle", reps: int = 200,
                   alpha: float = 0.3, seed: int = 0,
                   betas: Sequence[float] = (0.5,),
                   system: IntervalSystem = IntervalSystem.DYADIC,
                   mc_reps: int = 5000, master_seed: int = 0,
                   cache_path=None, piece_size: int = 300,
                   pruning: bool = True) -> ExperimentResult:
    """repeat generate-fit-score; per-rep seeds derive from (seed, rep)."""
    if method not in ("muscle", "muscle_s", "m_muscle"):
        raise InvalidInput(f"unknown method {method!r}")
    if reps < 1:
        raise InvalidInput("reps must be >= 1")
    betas = tuple(float(b) for b in betas)
    if method != "m_muscle" and len(betas) != 1:
        raise InvalidInput(f"{method} uses exactly one quantile level")
    config = QuantileConfig(betas=betas, alpha=alpha, intervals=system,
                            mc_reps=mc_reps, master_seed=master_seed)
    m = len(betas)
    tables = [calibrate(scenario.n, beta=b, alpha=alpha / m, system=system,
                        n_reps=mc_reps, master_seed=master_seed,
                        cache_path=cache_path) for b in betas]
    median_level = int(np.argmin(np.abs(np.array(betas) - 0.5)))
    reports = []
    seeds = []
    for rep in range(reps):
        rep_seed = (seed, rep)
        z, f_true = generate(scenario, rep_seed)
        t0 = time.perf_counter()
        if method == "muscle":
            seg = muscle(z, config, tables[0], pruning=pruning)
        elif method == "muscle_s":
            seg = muscle_s(z, config, tables[0], piece_size=piece_size,
                           pruning=pruning)
        else:
            seg = m_muscle(z, config, tables, pruning=pruning)
        ms = (time.perf_counter() - t0) * 1000.0
        reports.append(score_fit(scenario, seg, f_true, ms, median_level))
        seeds.append(f"{seed}.{rep}")
    return ExperimentResult(scenario=scenario.name, method=method, alpha=alpha,
                            reps=tuple(reports), seeds=tuple(seeds))
