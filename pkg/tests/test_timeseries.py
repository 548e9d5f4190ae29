import math
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roomev import timeseries as ts

T0 = datetime(2022, 1, 1)
NAN = float("nan")


def series(values, dt=15.0, name="x"):
    return ts.TimeSeries(name, "u", T0, np.array(values, dtype=float), dt=dt)


def same(a, b):
    return np.array_equal(np.asarray(a, dtype=float), np.asarray(b, dtype=float), equal_nan=True)


# oracles ------------------------------------------------------------------------------


def rle_oracle(values, min_len):
    out = list(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[j + 1] == values[i] and not math.isnan(values[i]):
            j += 1
        if j - i + 1 >= min_len and not math.isnan(values[i]):
            for k in range(i, j + 1):
                out[k] = NAN
        i = j + 1
    return out


def spike_oracle(values, mag):
    out = list(values)
    idx = [i for i, v in enumerate(values) if not math.isnan(v)]
    for pos in range(1, len(idx) - 1):
        i, a, b = idx[pos], idx[pos - 1], idx[pos + 1]
        if abs(values[i] - values[a]) >= mag and abs(values[i] - values[b]) >= mag:
            out[i] = NAN
    return out


def smooth_oracle(values, sigma):
    r = int(4 * sigma + 0.5)
    w = [math.exp(-0.5 * (k / sigma) ** 2) for k in range(-r, r + 1)]
    out = []
    for i, v in enumerate(values):
        if math.isnan(v):
            out.append(NAN)
            continue
        num = den = 0.0
        for k in range(-r, r + 1):
            j = i + k
            if 0 <= j < len(values) and not math.isnan(values[j]):
                num += w[k + r] * values[j]
                den += w[k + r]
        out.append(num / den)
    return out


# container ------------------------------------------------------------------------------


def test_series_is_immutable_and_gridded():
    s = series([1.0, 2.0, NAN])
    with pytest.raises(ValueError):
        s.values[0] = 5.0
    assert s.time_at(2) == datetime(2022, 1, 1, 0, 30)
    assert s.gaps.tolist() == [False, False, True]
    assert s.minute_of_day().tolist() == [0.0, 15.0, 30.0]


def test_series_rejects_bad_input():
    with pytest.raises(ValueError):
        series([1.0], dt=0.0)
    with pytest.raises(ValueError):
        series([1.0, float("inf")])


# remove_out_of_range -------------------------------------------------------------------


def test_soc_range_excludes_boundaries():
    out = ts.remove_out_of_range(series([0, 50, 100, 101]), 0, 100, exclude_boundary=True)
    assert same(out.values, [NAN, 50, NAN, NAN])


def test_water_range_inclusive():
    out = ts.remove_out_of_range(series([9.9, 25, 50.1]), 10, 50)
    assert same(out.values, [NAN, 25, NAN])


def test_inside_range_unchanged():
    s = series([11, 12, 13])
    assert same(ts.remove_out_of_range(s, 10, 50).values, s.values)


# remove_constant_runs ---------------------------------------------------------------------


def test_day_long_constant_run_removed():
    out = ts.remove_constant_runs(series([3.0] * 97), 24 * 60)
    assert np.isnan(out.values).all()


def test_run_shorter_than_threshold_kept():
    v = [1.0, 2.0] + [5.0] * 95 + [6.0]
    out = ts.remove_constant_runs(series(v), 24 * 60)
    assert same(out.values, v)


def test_only_long_run_removed():
    v = [1.0] * 5 + [2.0] + [3.0] * 2 + [4.0]
    out = ts.remove_constant_runs(series(v), 5 * 15)
    assert same(out.values, rle_oracle(v, 5))
    assert np.isnan(out.values[:5]).all() and not np.isnan(out.values[5:]).any()


# remove_spikes ------------------------------------------------------------------------------


def test_single_spike_removed():
    out = ts.remove_spikes(series([22.0, 24.0, 22.1]), 1.5)
    assert same(out.values, [22.0, NAN, 22.1])


def test_ramp_and_level_shift_kept():
    ramp = np.arange(10) * 1.0
    assert same(ts.remove_spikes(series(ramp), 1.5).values, ramp)
    shift = [20.0] * 4 + [23.0] * 4
    assert same(ts.remove_spikes(series(shift), 1.5).values, shift)


# interpolate_gaps -------------------------------------------------------------------------------


def test_short_gap_filled_linearly():
    out = ts.interpolate_gaps(series([10, NAN, NAN, 16]), 45)
    assert np.allclose(out.values, [10, 12, 14, 16], rtol=0, atol=1e-12)


def test_gap_of_exactly_max_gap_untouched():
    v = [10, NAN, NAN, NAN, 18]
    assert same(ts.interpolate_gaps(series(v), 45).values, v)


def test_edge_gaps_never_filled():
    v = [NAN, 1.0, NAN, 3.0, NAN]
    out = ts.interpolate_gaps(series(v), 45)
    assert same(out.values, [NAN, 1.0, 2.0, 3.0, NAN])


# gaussian_smooth --------------------------------------------------------------------------------


def test_constant_series_unchanged():
    out = ts.gaussian_smooth(series([4.0] * 50), 5.0)
    assert np.allclose(out.values, 4.0, rtol=0, atol=1e-12)


def test_impulse_response_matches_kernel():
    v = np.zeros(21)
    v[10] = 1.0
    out = ts.gaussian_smooth(series(v), 1.0)
    w = ts.gaussian_kernel(1.0)
    assert w.size == 9
    # every output point is fully supported here, so each weight is normalised by the kernel sum
    assert out.values[10] == pytest.approx(0.3989422804014327 / w.sum(), abs=1e-12)
    assert np.allclose(out.values[6:15], w[::-1] / w.sum(), atol=1e-15)


def test_smoothing_preserves_mean_away_from_edges():
    rng = np.random.default_rng(3)
    v = np.concatenate([np.zeros(30), rng.normal(size=200), np.zeros(30)])
    out = ts.gaussian_smooth(series(v), 2.0)
    assert out.values.mean() == pytest.approx(v.mean(), abs=1e-9)


def test_smoothing_matches_gap_aware_oracle():
    rng = np.random.default_rng(5)
    v = rng.normal(size=60)
    v[[3, 4, 20, 41]] = NAN
    out = ts.gaussian_smooth(series(v), 2.0)
    assert np.allclose(out.values, smooth_oracle(list(v), 2.0), equal_nan=True, rtol=0, atol=1e-12)


# whitening ---------------------------------------------------------------------------------------


def test_whitening_closed_form():
    w, stats = ts.whiten(series([1.0, 2.0, 3.0]))
    assert stats.mean == 2.0
    assert stats.std == pytest.approx(math.sqrt(2.0 / 3.0), abs=1e-15)
    assert w.values[0] == pytest.approx(-w.values[2], abs=1e-15)


def test_whitening_of_whitened_is_identity_stats():
    w, _ = ts.whiten(series(np.random.default_rng(0).normal(size=100)))
    stats = ts.whitening_stats(w.values)
    assert stats.mean == pytest.approx(0.0, abs=1e-12)
    assert stats.std == pytest.approx(1.0, abs=1e-12)


def test_zero_variance_rejected():
    with pytest.raises(ValueError, match="zero variance"):
        ts.whiten(series([2.0, 2.0, NAN]))


# subsample_valve -----------------------------------------------------------------------------------


def test_valve_bins():
    raw = series([1.0] * 15 + [1.0] * 8 + [0.0] * 7 + [1.0] * 5 + [0.0] * 10, dt=1.0, name="valve")
    out = ts.subsample_valve(raw)
    assert out.dt == 15.0
    assert out.values[0] == 1.0
    assert out.values[2] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert out.values[1] == pytest.approx(8.0 / 15.0, abs=1e-15)


def test_half_open_and_empty_bins():
    raw = series([1.0, 0.0] * 7 + [1.0] + [NAN] * 15, dt=1.0, name="valve")
    out = ts.subsample_valve(raw)
    assert out.values[0] == pytest.approx(8.0 / 15.0)
    assert np.isnan(out.values[1])
    half = ts.subsample_valve(series([1.0, 0.0], dt=1.0), target_dt=2.0)
    assert half.values[0] == 0.5


def test_valve_rejects_non_binary():
    with pytest.raises(ValueError):
        ts.subsample_valve(series([0.5] * 15, dt=1.0))


# pipelines and CSV -----------------------------------------------------------------------------------


def test_room_pipeline_order():
    assert [st[0] for st in ts.PIPELINES["room_temp"]] == [
        "remove_out_of_range", "remove_constant_runs", "remove_spikes", "gaussian_smooth"]
    assert [st[0] for st in ts.PIPELINES["valve"]][0] == "subsample_valve"


def test_unknown_pipeline():
    with pytest.raises(ValueError):
        ts.preprocess(series([1.0]), "nope")


def test_csv_round_trip(tmp_path):
    a = series([1.5, NAN, -2.25], name="a")
    b = series([0.1, 0.2, 0.3], name="b")
    text = ts.frame_to_csv([a, b], tmp_path / "f.csv", comment="config_hash=abc")
    assert text.startswith("# config_hash=abc\ntimestamp,a,b\n")
    back = ts.read_csv(tmp_path / "f.csv")
    assert same(back["a"].values, a.values) and same(back["b"].values, b.values)
    assert back["a"].t0 == T0 and back["a"].dt == 15.0


def test_csv_irregular_grid_rejected():
    with pytest.raises(ValueError, match="irregular"):
        ts.parse_csv("timestamp,x\n2022-01-01T00:00:00,1\n2022-01-01T00:15:00,2\n2022-01-01T00:45:00,3\n")


# properties ----------------------------------------------------------------------------------------------

values_st = arrays(np.float64, st.integers(1, 60),
                   elements=st.one_of(st.floats(-50, 50, allow_nan=False), st.just(NAN),
                                      st.sampled_from([1.0, 2.0])))


@settings(max_examples=60, deadline=None)
@given(values_st)
def test_removal_operators_idempotent_and_grid_preserving(v):
    s = series(v)
    for op in (lambda x: ts.remove_out_of_range(x, -10, 10),
               lambda x: ts.remove_constant_runs(x, 45),
               lambda x: ts.remove_spikes(x, 1.5)):
        once = op(s)
        assert len(once) == len(s) and once.t0 == s.t0 and once.dt == s.dt
        assert same(op(once).values, once.values)


@settings(max_examples=60, deadline=None)
@given(values_st, st.integers(1, 4))
def test_oracles_agree(v, run):
    s = series(v)
    assert same(ts.remove_constant_runs(s, run * 15).values, rle_oracle(list(v), run))
    assert same(ts.remove_spikes(s, 1.5).values, spike_oracle(list(v), 1.5))


@settings(max_examples=60, deadline=None)
@given(values_st)
def test_interpolation_only_fills_short_interior_gaps(v):
    out = ts.interpolate_gaps(series(v), 45).values
    valid = ~np.isnan(v)
    assert np.array_equal(out[valid], v[valid])
    idx = np.flatnonzero(valid)
    ref = np.interp(np.arange(v.size), idx, v[idx]) if idx.size else np.full(v.size, NAN)
    filled = np.isnan(v) & ~np.isnan(out)
    assert np.allclose(out[filled], ref[filled], rtol=0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-1e3, 1e3)))
def test_whiten_round_trip(v):
    if np.ptp(v) < 1e-6:
        return
    w, stats = ts.whiten(series(v))
    back = ts.unwhiten(w, stats)
    assert np.allclose(back.values, v, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(v).max()))
