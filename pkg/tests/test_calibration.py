import math

import numpy as np
import pytest

from qseg import (
    CacheCorruption,
    CriticalValueTable,
    IntervalSystem,
    InvalidInput,
    InvalidQuery,
    calibrate,
    fallback_bound,
    simulate_null_statistic,
)
from qseg.calibration import _null_draws, _order_stat_index

from _oracles import exact_null_quantile, stat_ref
from conftest import get_table

ALL = IntervalSystem.ALL
DYADIC = IntervalSystem.DYADIC

Q1_EXACT = math.sqrt(2.0 * math.log(2.0)) - math.sqrt(2.0)


def test_length_one_value_is_deterministic():
    # the single-bit statistic is almost-surely constant, so every level and
    # any number of draws give exactly sqrt(2 log 2) - sqrt(2)
    for alpha in (0.1, 0.3, 0.5):
        tab = calibrate(1, 0.5, alpha, ALL, n_reps=1000, master_seed=9)
        assert abs(tab.q(1) - Q1_EXACT) < 1e-12


def test_small_window_values_match_exact_enumeration():
    # at beta=1/2 the null has a handful of atoms; 5000 draws put the sample
    # quantile exactly on an atom of the enumerated distribution
    tab = get_table(5)
    for m in range(1, 6):
        assert tab.q(m) == exact_null_quantile(m, 0.5, 0.3, "all")


def test_values_frozen_regression():
    tab = get_table(5)
    assert tab.q(1) == pytest.approx(-0.23680353985762048, abs=1e-15)
    assert tab.q(4) == pytest.approx(0.4345398674048835, abs=1e-12)


def test_values_not_monotone_in_window_length():
    # the calibrated curve genuinely dips and rises; a single envelope value
    # would be wrong
    tab = get_table(5)
    assert tab.q(2) > tab.q(3)
    assert tab.q(4) > tab.q(3)


def test_alpha_monotonicity_on_shared_draws():
    tabs = [calibrate(12, 0.5, a, DYADIC, n_reps=1000, master_seed=3)
            for a in (0.1, 0.3, 0.5)]
    for m in (1, 2, 3, 8, 12):
        qs = [t.q(m) for t in tabs]
        assert qs[0] >= qs[1] >= qs[2]


def test_calibrate_determinism():
    a = calibrate(10, 0.25, 0.3, DYADIC, n_reps=1000, master_seed=5)
    b = calibrate(10, 0.25, 0.3, DYADIC, n_reps=1000, master_seed=5)
    assert np.array_equal(a.grid, b.grid)
    assert np.array_equal(a.values, b.values)
    c = calibrate(10, 0.25, 0.3, DYADIC, n_reps=1000, master_seed=6)
    assert not np.array_equal(b.values, c.values)


def test_grid_shape_and_roundup_lookup():
    tab = calibrate(100, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=1)
    assert tab.grid.tolist() == sorted(set(range(1, 65)) | {100})
    assert tab.q(65) == tab.q(100)
    assert tab.q(99) == tab.q(100)
    with pytest.raises(InvalidQuery):
        tab.q(0)


def test_beyond_grid_uses_fallback_envelope():
    tab = calibrate(16, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=1)
    assert tab.q(17) == fallback_bound(0.3, tab.q_envelope)
    assert tab.q(17) >= tab.q_envelope
    assert tab.q_envelope == tab.values.max()


def test_fallback_bound_values_and_validation():
    assert fallback_bound(0.5, 0.0) == pytest.approx(
        2.0 * math.sqrt(2.0 * math.log(4.0)), rel=1e-15)
    assert fallback_bound(0.3, 1.5) == pytest.approx(
        1.5 + 2.0 * math.sqrt(2.0 * math.log(2.0 / 0.3)), rel=1e-15)
    for bad in (0.0, 1.0, -0.2, 2.0):
        with pytest.raises(InvalidInput):
            fallback_bound(bad, 0.0)


def test_calibrate_validation_and_warning():
    with pytest.raises(InvalidInput):
        calibrate(0, 0.5, 0.3, DYADIC)
    with pytest.raises(InvalidInput):
        calibrate(4, 1.5, 0.3, DYADIC)
    with pytest.raises(InvalidInput):
        calibrate(4, 0.5, 0.0, DYADIC)
    with pytest.raises(InvalidInput):
        calibrate(4, 0.5, 0.3, DYADIC, n_reps=999)
    with pytest.warns(UserWarning, match="below the recommended"):
        calibrate(2, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=11)


def test_order_stat_index():
    assert _order_stat_index(5000, 0.3) == 3500
    assert _order_stat_index(1000, 0.5) == 500
    assert _order_stat_index(10, 0.999) == 1    # clamped at 1
    # snap: 4000 * 0.7 is 2800.0000000000005 in floats
    assert _order_stat_index(4000, 0.3) == 2800


def test_coverage_invariant_on_calibration_draws():
    # by construction at most an alpha-fraction of the calibration draws
    # exceed the stored critical value
    alpha = 0.3
    tab = calibrate(12, 0.5, alpha, DYADIC, n_reps=1000, master_seed=3)
    for gi, m in enumerate(tab.grid):
        draws = _null_draws(int(m), 0.5, DYADIC, 1000, 3)
        assert np.mean(draws > tab.values[gi]) <= alpha + 1e-12


def test_simulate_null_statistic_protocol():
    v1 = simulate_null_statistic(9, 0.5, ALL, master_seed=2, rep=4)
    v2 = simulate_null_statistic(9, 0.5, ALL, master_seed=2, rep=4)
    assert v1 == v2
    assert v1 != simulate_null_statistic(9, 0.5, ALL, master_seed=2, rep=5)
    # same draw protocol, reference statistic
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((2, 9, 4))))
    bits = (rng.random(9) < 0.5).astype(int)
    assert v1 == pytest.approx(stat_ref(bits, 0.5, "all"), abs=1e-12)
    with pytest.raises(InvalidInput):
        simulate_null_statistic(0, 0.5, ALL, master_seed=0)
    with pytest.raises(InvalidInput):
        simulate_null_statistic(4, 1.2, ALL, master_seed=0)


def test_key_round_trips_parameters():
    tab = get_table(5)
    assert tab.key == (f"beta={0.5:.17g},alpha={0.3:.17g},"
                       f"system=all,n_reps=5000,seed=0")


# --------------------------------------------------------------------- cache

def test_cache_roundtrip_and_byte_stability(tmp_path):
    path = str(tmp_path / "cal.txt")
    a = calibrate(10, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7,
                  cache_path=path)
    blob1 = open(path, "rb").read()
    assert blob1
    b = calibrate(10, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7,
                  cache_path=path)
    blob2 = open(path, "rb").read()
    assert blob1 == blob2                       # full hit appends nothing
    assert np.array_equal(a.values, b.values)


def test_cache_appends_only_missing_records(tmp_path):
    path = str(tmp_path / "cal.txt")
    calibrate(4, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7, cache_path=path)
    blob_small = open(path, "rb").read()
    calibrate(8, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7, cache_path=path)
    blob_big = open(path, "rb").read()
    assert blob_big.startswith(blob_small)      # append-only
    assert blob_big.count(b"\n") == blob_small.count(b"\n") + 4  # m=5..8 only


def test_cache_is_read_back_not_resimulated(tmp_path):
    # plant a sentinel value for one record; the table must echo it verbatim
    path = str(tmp_path / "cal.txt")
    calibrate(4, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7, cache_path=path)
    lines = open(path).read().splitlines()
    doctored = []
    for line in lines:
        parts = line.split(",")
        if parts[5] == "3":
            parts[6] = "123.5"
        doctored.append(",".join(parts))
    with open(path, "w") as fh:
        fh.write("\n".join(doctored) + "\n")
    tab = calibrate(4, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7,
                    cache_path=path)
    assert tab.q(3) == 123.5


def test_cache_corruption_conflicting_records(tmp_path):
    path = str(tmp_path / "cal.txt")
    line = "0.5,0.29999999999999999,dyadic,1000,7,2,"
    with open(path, "w") as fh:
        fh.write(line + "0.1\n")
        fh.write(line + "0.2\n")
    with pytest.raises(CacheCorruption):
        calibrate(4, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7,
                  cache_path=path)


def test_cache_corruption_malformed(tmp_path):
    path = str(tmp_path / "cal.txt")
    with open(path, "w") as fh:
        fh.write("only,three,fields\n")
    with pytest.raises(CacheCorruption):
        calibrate(4, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7,
                  cache_path=path)
    with open(path, "w") as fh:
        fh.write("0.5,0.3,dyadic,1000,7,notanint,0.1\n")
    with pytest.raises(CacheCorruption):
        calibrate(4, 0.5, 0.3, DYADIC, n_reps=1000, master_seed=7,
                  cache_path=path)


def test_table_q_is_independent_of_alpha_only_through_order_stat():
    # two levels over identical draws: the stricter level picks a higher
    # order statistic of the very same sorted sample
    draws = _null_draws(6, 0.5, DYADIC, 1000, 3)
    t1 = calibrate(6, 0.5, 0.1, DYADIC, n_reps=1000, master_seed=3)
    t2 = calibrate(6, 0.5, 0.5, DYADIC, n_reps=1000, master_seed=3)
    assert t1.q(6) == draws[_order_stat_index(1000, 0.1) - 1]
    assert t2.q(6) == draws[_order_stat_index(1000, 0.5) - 1]
