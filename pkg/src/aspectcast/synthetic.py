"""Seeded synthetic series generators for experiments and fixtures."""
from __future__ import annotations

import csv

import numpy as np


def ar1(n: int, phi: float = 0.9, sigma: float = 1.0, seed: int = 0) -> np.ndarray:
    """First-order autoregressive series x[t] = phi*x[t-1] + noise."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n) * sigma
    out = np.empty(n)
    out[0] = noise[0]
    for t in range(1, n):
        out[t] = phi * out[t - 1] + noise[t]
    return out


def seasonal_trend(
    n: int,
    period: int = 24,
    amplitude: float = 2.0,
    slope: float = 0.01,
    noise: float = 0.3,
    seed: int = 0,
) -> np.ndarray:
    """Sine seasonality on a linear ramp with Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return (
        slope * t
        + amplitude * np.sin(2 * np.pi * t / period)
        + rng.standard_normal(n) * noise
    )


def write_series_csv(
    path: str,
    values: np.ndarray,
    timestamp_column: str = "t",
    value_column: str = "v",
) -> None:
    """Write a series with integer index timestamps, one channel."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([timestamp_column, value_column])
        for i, v in enumerate(np.asarray(values, dtype=np.float64)):
            writer.writerow([i, repr(float(v))])
