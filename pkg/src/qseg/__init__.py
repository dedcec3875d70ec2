"""qseg: multiscale quantile segmentation with local error control."""

from .calibration import (CriticalValueTable, calibrate, fallback_bound,
                          simulate_null_statistic)
from .core import (BoundPair, IntervalSystem, QuantileConfig, count_bounds,
                   count_index_range, g_beta, local_log_likelihood,
                   multiscale_statistic, penalty, system_lengths, transform)
from .errors import (CacheCorruption, InfeasibleSegment, InvalidInput,
                     InvalidQuery)
from .segmentation import (FeasibleInterval, Segmentation, fit_segment_value,
                           m_muscle, muscle, muscle_s, segment_feasibility)
from .wavelet_tree import WaveletTree, build

__version__ = "0.1.0"

__all__ = [
    "BoundPair", "CacheCorruption", "CriticalValueTable", "FeasibleInterval",
    "InfeasibleSegment", "IntervalSystem", "InvalidInput", "InvalidQuery",
    "QuantileConfig", "Segmentation", "WaveletTree", "build", "calibrate",
    "count_bounds", "count_index_range", "fallback_bound",
    "fit_segment_value", "g_beta", "local_log_likelihood", "m_muscle",
    "multiscale_statistic", "muscle", "muscle_s", "penalty",
    "segment_feasibility", "simulate_null_statistic", "system_lengths",
    "transform",
]
