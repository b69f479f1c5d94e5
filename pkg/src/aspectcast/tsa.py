"""Classical time-series analysis primitives.

These feed the statistical/temporal prompt builders and the variance test
used when comparing repeated runs. Everything here is a deterministic pure
function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats as _scipy_stats

from .errors import (
    ConstantSeries,
    DegenerateGroups,
    EmptyInput,
    LagTooLarge,
    PeriodTooLarge,
    TooShort,
)


@dataclass(frozen=True)
class SummaryStats:
    min: float
    max: float
    mean: float
    std: float


@dataclass(frozen=True)
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    def reconstruction(self) -> np.ndarray:
        return self.trend + self.seasonal + self.residual


@dataclass(frozen=True)
class SpectralSummary:
    """Top periodogram peaks as (frequency in cycles/sample, power), power-descending."""

    dominant_frequencies: tuple[tuple[float, float], ...]
    n_reported: int


class TrendLabel(str, Enum):
    UPWARD = "upward"
    DOWNWARD = "downward"
    STABLE = "stable"


def _as_array(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 1:
        raise EmptyInput("expected a 1-D sequence")
    return arr


def summary_stats(seq) -> SummaryStats:
    """Min/max/mean/std with the population std convention."""
    arr = _as_array(seq)
    if arr.size == 0:
        raise EmptyInput("summary_stats of empty sequence")
    return SummaryStats(
        min=float(arr.min()),
        max=float(arr.max()),
        mean=float(arr.mean()),
        std=float(arr.std()),
    )


def acf(seq, max_lag: int) -> np.ndarray:
    """Biased autocorrelation estimate for lags 0..max_lag.

    The divide-by-N estimator keeps the autocovariance sequence positive
    semidefinite, which the Durbin-Levinson recursion in `pacf` relies on.
    """
    arr = _as_array(seq)
    if max_lag < 0 or max_lag >= arr.size:
        raise LagTooLarge(f"max_lag {max_lag} not in [0, {arr.size - 1}]")
    centered = arr - arr.mean()
    denom = float(np.dot(centered, centered))
    if denom == 0.0:
        raise ConstantSeries("acf undefined for a constant series")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(np.dot(centered[:-k], centered[k:])) / denom
    return out


def pacf(seq, max_lag: int) -> np.ndarray:
    """Partial autocorrelations for lags 1..max_lag via Durbin-Levinson.

    Element i of the result is the lag-(i+1) partial autocorrelation.
    """
    if max_lag < 1:
        raise LagTooLarge("pacf needs max_lag >= 1")
    rho = acf(seq, max_lag)
    out = np.empty(max_lag)
    phi_prev = np.zeros(0)
    for k in range(1, max_lag + 1):
        if k == 1:
            phi_kk = rho[1]
        else:
            num = rho[k] - float(np.dot(phi_prev, rho[k - 1:0:-1]))
            den = 1.0 - float(np.dot(phi_prev, rho[1:k]))
            phi_kk = num / den if den > 1e-12 else 0.0
        phi = np.empty(k)
        phi[:k - 1] = phi_prev - phi_kk * phi_prev[::-1]
        phi[k - 1] = phi_kk
        out[k - 1] = phi_kk
        phi_prev = phi
    return out


def periodogram_top(seq, n_peaks: int = 3) -> SpectralSummary:
    """Dominant spectral peaks of the mean-removed, power-of-two padded FFT.

    DC is excluded; frequencies are in cycles/sample, in (0, 0.5]. Peaks
    below a relative numerical floor are not reported, so constant input
    yields an empty summary.
    """
    arr = _as_array(seq)
    if arr.size < 4:
        raise TooShort(f"periodogram needs >= 4 points, got {arr.size}")
    if n_peaks < 1:
        raise ValueError("n_peaks must be >= 1")
    centered = arr - arr.mean()
    m = 1 << (arr.size - 1).bit_length()
    spectrum = np.fft.rfft(centered, n=m)
    power = np.abs(spectrum) ** 2
    scale = float(np.max(np.abs(arr))) if arr.size else 0.0
    floor = (max(scale, 1e-300) * m * 1e-12) ** 2
    peaks = []
    for b in range(1, m // 2 + 1):
        if power[b] > floor:
            peaks.append((b / m, float(power[b])))
    peaks.sort(key=lambda fp: (-fp[1], fp[0]))
    top = tuple(peaks[:n_peaks])
    return SpectralSummary(dominant_frequencies=top, n_reported=len(top))


def decompose(seq, period: int) -> Decomposition:
    """Additive trend/seasonal/residual split.

    Trend is a centered moving average (half-weights at both ends for even
    periods), edge-filled with the nearest valid value; seasonal is the
    re-centered periodic mean of the detrended interior; residual is the
    exact remainder, so the three components always sum back to the input.
    """
    arr = _as_array(seq)
    if period < 1:
        raise PeriodTooLarge("period must be >= 1")
    n = arr.size
    if n < 2 * period:
        raise PeriodTooLarge(f"need length >= 2*period, got {n} < {2 * period}")

    if period % 2 == 0:
        weights = np.full(period + 1, 1.0 / period)
        weights[0] = weights[-1] = 0.5 / period
    else:
        weights = np.full(period, 1.0 / period)
    half = len(weights) // 2
    valid = np.convolve(arr, weights, mode="valid")  # length n - 2*half
    trend = np.empty(n)
    trend[half:n - half] = valid
    trend[:half] = valid[0]
    trend[n - half:] = valid[-1]

    detrended = arr - trend
    interior = np.arange(half, n - half)
    means = np.zeros(period)
    for phase in range(period):
        sel = interior[(interior % period) == phase]
        if sel.size:
            means[phase] = detrended[sel].mean()
    means -= means.mean()
    seasonal = means[np.arange(n) % period]
    residual = arr - trend - seasonal
    return Decomposition(trend=trend, seasonal=seasonal, residual=residual, period=period)


def trend_label(seq, stable_ratio: float = 0.1, epsilon: float = 1e-12) -> TrendLabel:
    """Classify overall direction by the OLS slope over the sample index.

    The total fitted rise |slope * (n-1)| is compared against
    `stable_ratio` times the spread; within that band the series counts as
    stable (inclusive at the boundary).
    """
    arr = _as_array(seq)
    if arr.size < 2:
        raise EmptyInput("trend_label needs at least 2 points")
    idx = np.arange(arr.size, dtype=np.float64)
    idx -= idx.mean()
    slope = float(np.dot(idx, arr - arr.mean()) / np.dot(idx, idx))
    swing = abs(slope * (arr.size - 1))
    if swing <= stable_ratio * (float(arr.std()) + epsilon):
        return TrendLabel.STABLE
    return TrendLabel.UPWARD if slope > 0 else TrendLabel.DOWNWARD


def anomaly_points(seq, z_threshold: float = 2.5) -> list[tuple[int, float, float]]:
    """Points whose |z-score| exceeds the threshold, strongest first."""
    arr = _as_array(seq)
    if arr.size < 3:
        raise EmptyInput("anomaly_points needs at least 3 points")
    std = float(arr.std())
    if std == 0.0:
        raise ConstantSeries("anomaly_points undefined for a constant series")
    z = (arr - arr.mean()) / std
    hits = [(int(i), float(arr[i]), float(z[i])) for i in np.flatnonzero(np.abs(z) > z_threshold)]
    hits.sort(key=lambda item: (-abs(item[2]), item[0]))
    return hits


def levene_test(groups: list) -> tuple[float, float]:
    """Mean-centered Levene W statistic and its F-distribution p-value."""
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2 or any(a.size < 2 for a in arrays):
        raise DegenerateGroups("need >= 2 groups with >= 2 values each")
    k = len(arrays)
    n_total = sum(a.size for a in arrays)
    z_groups = [np.abs(a - a.mean()) for a in arrays]
    z_bar_i = np.array([z.mean() for z in z_groups])
    z_bar = float(np.concatenate(z_groups).mean())
    numerator = (n_total - k) * float(
        sum(z.size * (zb - z_bar) ** 2 for z, zb in zip(z_groups, z_bar_i))
    )
    denominator = (k - 1) * float(
        sum(((z - zb) ** 2).sum() for z, zb in zip(z_groups, z_bar_i))
    )
    if denominator == 0.0:
        if numerator == 0.0:
            return 0.0, 1.0
        return float("inf"), 0.0
    w = numerator / denominator
    p = float(_scipy_stats.f.sf(w, k - 1, n_total - k))
    return w, p
