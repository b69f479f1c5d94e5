"""Analysis primitives against independent brute-force oracles."""
import numpy as np
import pytest
from scipy import stats as scipy_stats
from scipy.linalg import toeplitz

from aspectcast import tsa
from aspectcast.errors import (
    ConstantSeries,
    DegenerateGroups,
    EmptyInput,
    LagTooLarge,
    PeriodTooLarge,
    TooShort,
)


# --- oracles (deliberately naive, loop-based) ---------------------------------

def oracle_stats(seq):
    lo = hi = seq[0]
    total = 0.0
    for v in seq:
        lo = min(lo, v)
        hi = max(hi, v)
        total += v
    mean = total / len(seq)
    var = 0.0
    for v in seq:
        var += (v - mean) ** 2
    return lo, hi, mean, (var / len(seq)) ** 0.5


def oracle_acf(seq, max_lag):
    mean = sum(seq) / len(seq)
    denom = sum((v - mean) ** 2 for v in seq)
    out = []
    for k in range(max_lag + 1):
        num = 0.0
        for t in range(len(seq) - k):
            num += (seq[t] - mean) * (seq[t + k] - mean)
        out.append(num / denom)
    return out


def oracle_pacf(seq, max_lag):
    """Yule-Walker solves per lag, independent of the recursion under test."""
    rho = np.asarray(oracle_acf(seq, max_lag))
    out = []
    for k in range(1, max_lag + 1):
        coeffs = np.linalg.solve(toeplitz(rho[:k]), rho[1:k + 1])
        out.append(coeffs[-1])
    return out


def oracle_dft_power(seq):
    """O(N^2) direct DFT of the mean-removed, power-of-two padded input."""
    x = np.asarray(seq, dtype=np.float64)
    x = x - x.mean()
    m = 1 << (len(x) - 1).bit_length()
    padded = np.zeros(m)
    padded[:len(x)] = x
    powers = []
    for b in range(m // 2 + 1):
        re = sum(padded[t] * np.cos(-2 * np.pi * b * t / m) for t in range(m))
        im = sum(padded[t] * np.sin(-2 * np.pi * b * t / m) for t in range(m))
        powers.append(re * re + im * im)
    return powers


def oracle_decompose(seq, period):
    x = np.asarray(seq, dtype=np.float64)
    n = len(x)
    if period % 2 == 0:
        w = [0.5 / period] + [1.0 / period] * (period - 1) + [0.5 / period]
    else:
        w = [1.0 / period] * period
    half = len(w) // 2
    trend = np.empty(n)
    for i in range(n):
        j = min(max(i, half), n - half - 1)
        trend[i] = sum(w[s] * x[j - half + s] for s in range(len(w)))
    detr = x - trend
    means = np.zeros(period)
    for phase in range(period):
        bucket = [detr[i] for i in range(half, n - half) if i % period == phase]
        if bucket:
            means[phase] = sum(bucket) / len(bucket)
    means -= means.mean()
    seasonal = np.array([means[i % period] for i in range(n)])
    return trend, seasonal, x - trend - seasonal


# --- summary_stats -------------------------------------------------------------

def test_stats_constant():
    s = tsa.summary_stats([2, 2, 2])
    assert (s.min, s.max, s.mean, s.std) == (2, 2, 2, 0)


def test_stats_two_point():
    s = tsa.summary_stats([0, 10])
    assert s.mean == 5 and s.std == 5


def test_stats_oracle_random():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, size=1000)
    s = tsa.summary_stats(x)
    lo, hi, mean, std = oracle_stats(list(x))
    assert abs(s.mean - mean) <= 1e-12 * max(1, abs(mean))
    assert abs(s.std - std) <= 1e-12 * max(1, std)
    assert s.min == lo and s.max == hi


def test_stats_empty():
    with pytest.raises(EmptyInput):
        tsa.summary_stats([])


# --- acf / pacf ----------------------------------------------------------------

def test_acf_alternating():
    x = np.array([1.0, -1.0] * 50)
    r = tsa.acf(x, 1)
    assert abs(r[1] - (-0.99)) < 1e-12


def test_acf_lag0_and_errors():
    assert tsa.acf([1.0, 2.0, 4.0], 0)[0] == 1.0
    with pytest.raises(ConstantSeries):
        tsa.acf([3.0, 3.0, 3.0], 1)
    with pytest.raises(LagTooLarge):
        tsa.acf([1.0, 2.0], 2)


def test_acf_ar1_theory():
    rng = np.random.default_rng(7)
    phi = 0.8
    x = np.zeros(10000)
    eps = rng.standard_normal(10000)
    for t in range(1, 10000):
        x[t] = phi * x[t - 1] + eps[t]
    r = tsa.acf(x, 5)
    direct = oracle_acf(list(x), 5)
    assert np.allclose(r, direct, atol=1e-9)
    for k in range(1, 6):
        assert abs(r[k] - phi ** k) < 0.05


def test_pacf_ar1_and_white_noise():
    rng = np.random.default_rng(9)
    phi = 0.6
    x = np.zeros(10000)
    eps = rng.standard_normal(10000)
    for t in range(1, 10000):
        x[t] = phi * x[t - 1] + eps[t]
    p = tsa.pacf(x, 5)
    assert abs(p[0] - phi) < 0.05
    assert all(abs(v) < 0.05 for v in p[1:])

    noise = rng.standard_normal(10000)
    p = tsa.pacf(noise, 40)
    bound = 3 / np.sqrt(10000)
    assert np.mean(np.abs(p) < bound) >= 0.95


def test_pacf_base_case_equals_acf():
    x = np.random.default_rng(3).standard_normal(200)
    assert tsa.pacf(x, 4)[0] == tsa.acf(x, 1)[1]


def test_pacf_yule_walker_oracle():
    rng = np.random.default_rng(21)
    for _ in range(5):
        x = rng.standard_normal(256)
        ours = tsa.pacf(x, 10)
        ref = oracle_pacf(x, 10)
        assert np.allclose(ours, ref, atol=1e-6)


# --- periodogram ----------------------------------------------------------------

def test_periodogram_single_tone():
    t = np.arange(128)
    x = np.sin(2 * np.pi * 5 * t / 128)
    top = tsa.periodogram_top(x, 1)
    assert top.dominant_frequencies[0][0] == pytest.approx(5 / 128, abs=1e-12)


def test_periodogram_constant_no_peaks():
    top = tsa.periodogram_top([0.1] * 64, 3)
    assert top.n_reported == 0


def test_periodogram_two_tone_order_and_oracle():
    t = np.arange(64)
    x = 2 * np.sin(2 * np.pi * 3 * t / 64) + np.sin(2 * np.pi * 11 * t / 64)
    top = tsa.periodogram_top(x, 2)
    freqs = [f for f, _ in top.dominant_frequencies]
    assert freqs == [3 / 64, 11 / 64]
    ref = oracle_dft_power(x)
    for freq, power in top.dominant_frequencies:
        b = round(freq * 64)
        assert abs(power - ref[b]) < 1e-9 * max(1.0, ref[b])


def test_periodogram_too_short():
    with pytest.raises(TooShort):
        tsa.periodogram_top([1.0, 2.0], 1)


def test_fft_round_trip():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(100)
    back = np.fft.irfft(np.fft.rfft(x, n=128), n=128)[:100]
    assert np.max(np.abs(back - x)) < 1e-9


# --- decompose -------------------------------------------------------------------

def test_decompose_alternating():
    x = np.array([1.0, -1.0] * 20)
    parts = tsa.decompose(x, 2)
    assert np.max(np.abs(parts.trend[2:-2])) < 1e-12
    assert np.allclose(parts.seasonal[:2], [1.0, -1.0], atol=1e-12)
    assert np.max(np.abs(parts.residual[2:-2])) < 1e-12


def test_decompose_ramp_no_seasonality():
    x = np.arange(60, dtype=np.float64)
    parts = tsa.decompose(x, 5)
    assert np.max(np.abs(parts.seasonal)) < 1e-9


def test_decompose_ramp_plus_sine_trend_recovery():
    t = np.arange(240, dtype=np.float64)
    ramp = 0.05 * t
    x = ramp + np.sin(2 * np.pi * t / 12)
    parts = tsa.decompose(x, 12)
    interior = slice(12, -12)
    rmse = np.sqrt(np.mean((parts.trend[interior] - ramp[interior]) ** 2))
    assert rmse < 0.05 * (ramp.max() - ramp.min())


def test_decompose_reconstruction_and_oracle():
    rng = np.random.default_rng(11)
    for period in (2, 5, 12):
        x = rng.standard_normal(96)
        parts = tsa.decompose(x, period)
        assert np.max(np.abs(parts.reconstruction() - x)) < 1e-12
        trend, seasonal, residual = oracle_decompose(x, period)
        assert np.allclose(parts.trend, trend, atol=1e-9)
        assert np.allclose(parts.seasonal, seasonal, atol=1e-9)
        assert np.allclose(parts.residual, residual, atol=1e-9)


def test_decompose_period_too_large():
    with pytest.raises(PeriodTooLarge):
        tsa.decompose(np.arange(10.0), 6)


# --- trend label ------------------------------------------------------------------

def test_trend_label_basic():
    assert tsa.trend_label(np.arange(50.0)) is tsa.TrendLabel.UPWARD
    assert tsa.trend_label(-np.arange(50.0)) is tsa.TrendLabel.DOWNWARD
    assert tsa.trend_label(np.full(10, 3.0)) is tsa.TrendLabel.STABLE


def test_trend_label_boundary_inclusive():
    # derive the exact swing/spread ratio from the stated rule, then probe
    # both sides of it
    rng = np.random.default_rng(2)
    x = rng.standard_normal(64) + 0.001 * np.arange(64)
    idx = np.arange(64.0)
    idx -= idx.mean()
    slope = float(np.dot(idx, x - x.mean()) / np.dot(idx, idx))
    swing = abs(slope * 63)
    ratio = swing / (x.std() + 1e-12)
    at = np.nextafter(ratio, np.inf)
    assert tsa.trend_label(x, stable_ratio=at) is tsa.TrendLabel.STABLE
    assert tsa.trend_label(x, stable_ratio=ratio * 0.999) is not tsa.TrendLabel.STABLE


# --- anomalies ---------------------------------------------------------------------

def test_anomaly_single_outlier():
    x = [0.0] * 99 + [100.0]
    hits = tsa.anomaly_points(x)
    assert hits and hits[0][0] == 99


def test_anomaly_threshold_inf():
    assert tsa.anomaly_points(np.random.default_rng(0).standard_normal(50),
                              z_threshold=float("inf")) == []


def test_anomaly_standard_normal_counts():
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal(1000)
        hits = tsa.anomaly_points(x, 2.5)
        assert 2 <= len(hits) <= 30


def test_anomaly_constant_error():
    with pytest.raises(ConstantSeries):
        tsa.anomaly_points([1.0, 1.0, 1.0])


# --- levene ---------------------------------------------------------------------------

def test_levene_identical_groups():
    stat, p = tsa.levene_test([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    assert stat == 0.0 and p == 1.0


def test_levene_scaled_group_significant():
    rng = np.random.default_rng(4)
    a = rng.standard_normal(200)
    stat, p = tsa.levene_test([a, a * 10])
    assert stat > 0 and p < 0.05


def test_levene_matches_reference():
    rng = np.random.default_rng(6)
    groups = [rng.standard_normal(50) * s for s in (1.0, 1.5, 0.7)]
    stat, p = tsa.levene_test(groups)
    ref_stat, ref_p = scipy_stats.levene(*groups, center="mean")
    assert abs(stat - ref_stat) < 1e-10
    assert abs(p - ref_p) < 1e-10


def test_levene_degenerate():
    with pytest.raises(DegenerateGroups):
        tsa.levene_test([[1.0, 2.0]])
    with pytest.raises(DegenerateGroups):
        tsa.levene_test([[1.0], [2.0, 3.0]])


def test_analysis_determinism():
    x = np.random.default_rng(8).standard_normal(128)
    assert np.array_equal(tsa.acf(x, 10), tsa.acf(x, 10))
    assert np.array_equal(tsa.pacf(x, 10), tsa.pacf(x, 10))
    assert tsa.periodogram_top(x, 3) == tsa.periodogram_top(x, 3)
