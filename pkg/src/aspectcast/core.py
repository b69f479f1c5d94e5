"""Dataset ingestion, chronological splitting, and per-window normalization.

All modeling downstream is index-based; timestamps are validated at load
time and kept only as metadata.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptySeries,
    FrequencyMismatch,
    IoFailure,
    MissingColumn,
    NonMonotonicTimestamps,
    SeriesTooShort,
)


class Frequency(str, Enum):
    HOURLY = "hourly"
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"

    @property
    def nominal_seconds(self) -> float:
        return _NOMINAL_SECONDS[self]

    @property
    def default_period(self) -> int:
        """Default seasonal period, in samples, for analysis routines."""
        return _DEFAULT_PERIOD[self]


_NOMINAL_SECONDS = {
    Frequency.HOURLY: 3600.0,
    Frequency.DAILY: 86400.0,
    Frequency.WEEKLY: 604800.0,
    Frequency.MONTHLY: 365.25 / 12 * 86400.0,
}

# hourly data repeats daily, daily weekly, weekly yearly, monthly yearly
_DEFAULT_PERIOD = {
    Frequency.HOURLY: 24,
    Frequency.DAILY: 7,
    Frequency.WEEKLY: 52,
    Frequency.MONTHLY: 12,
}


@dataclass(frozen=True)
class TimeSeries:
    """Univariate series with strictly increasing timestamps."""

    values: np.ndarray
    timestamps: np.ndarray
    frequency: Frequency
    name: str = "series"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        timestamps = np.asarray(self.timestamps, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)
        if values.size == 0:
            raise EmptySeries(f"{self.name}: no rows")
        if values.shape != timestamps.shape or values.ndim != 1:
            raise EmptySeries(f"{self.name}: values and timestamps must be equal-length 1-D")
        if timestamps.size > 1 and not np.all(np.diff(timestamps) > 0):
            raise NonMonotonicTimestamps(f"{self.name}: timestamps must be strictly increasing")

    def __len__(self) -> int:
        return int(self.values.size)

    def check_frequency(self) -> None:
        """Validate the declared frequency against the median timestamp delta.

        Only meaningful when timestamps carry wall-clock seconds; loaders
        call this for datetime-parsed columns and skip it for plain indices.
        """
        if len(self) < 2:
            return
        delta = float(np.median(np.diff(self.timestamps)))
        nominal = self.frequency.nominal_seconds
        if not (0.9 * nominal <= delta <= 1.1 * nominal):
            raise FrequencyMismatch(
                f"{self.name}: median delta {delta:.0f}s vs nominal "
                f"{nominal:.0f}s for {self.frequency.value}"
            )


@dataclass(frozen=True)
class ForecastTask:
    """Input length and forecast horizon, both in time steps."""

    input_len: int
    horizon: int

    def __post_init__(self):
        if self.input_len < 1 or self.horizon < 1:
            raise ValueError("input_len and horizon must be >= 1")


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError("all split fractions must be > 0")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


@dataclass(frozen=True)
class NormState:
    """Statistics of one input window, sufficient to invert normalization."""

    mean: float
    std: float
    epsilon: float = 1e-5

    @property
    def divisor(self) -> float:
        # max() instead of std+epsilon keeps nonconstant windows at exactly
        # unit variance while still mapping constant windows to zeros
        return max(self.std, self.epsilon)


@dataclass(frozen=True)
class Window:
    """One forecasting example: `input_len` observed points and `horizon` targets."""

    start: int
    input: np.ndarray
    target: np.ndarray


@dataclass(frozen=True)
class SplitWindows:
    train: tuple[Window, ...]
    val: tuple[Window, ...]
    test: tuple[Window, ...]
    n_train_points: int
    n_val_points: int
    n_total_points: int

    @property
    def counts(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.val), len(self.test))


_DATETIME_FORMATS = (
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d",
    "%Y/%m/%d %H:%M:%S",
    "%Y/%m/%d %H:%M",
    "%Y/%m/%d",
)


def _parse_timestamp(raw: str) -> tuple[float, bool]:
    """Return (value, was_datetime). Numeric stamps are used verbatim."""
    text = raw.strip()
    try:
        return float(text), False
    except ValueError:
        pass
    for fmt in _DATETIME_FORMATS:
        try:
            return datetime.strptime(text, fmt).timestamp(), True
        except ValueError:
            continue
    try:
        return datetime.fromisoformat(text).timestamp(), True
    except ValueError as exc:
        raise IoFailure(f"unparseable timestamp {raw!r}") from exc


def load_csv(
    path: str,
    value_column: str,
    timestamp_column: str,
    frequency: Optional[Frequency] = None,
    name: Optional[str] = None,
    delimiter: str = ",",
) -> TimeSeries:
    """Load one channel of a CSV file into a TimeSeries.

    The file must have a header row. Rows with unparseable values abort the
    load (rejected, not skipped) so silent gaps cannot appear downstream.
    """
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        if reader.fieldnames is None:
            raise EmptySeries(f"{path}: empty file")
        for col in (value_column, timestamp_column):
            if col not in reader.fieldnames:
                raise MissingColumn(f"{path}: column {col!r} not in header {reader.fieldnames}")
        values: list[float] = []
        stamps: list[float] = []
        any_datetime = False
        for i, row in enumerate(reader, start=2):
            raw_value = row.get(value_column)
            raw_stamp = row.get(timestamp_column)
            if raw_value is None or raw_stamp is None:
                raise IoFailure(f"{path}:{i}: short row")
            try:
                values.append(float(raw_value))
            except (TypeError, ValueError) as exc:
                raise IoFailure(f"{path}:{i}: unparseable value {raw_value!r}") from exc
            stamp, was_dt = _parse_timestamp(raw_stamp)
            any_datetime = any_datetime or was_dt
            stamps.append(stamp)
    if not values:
        raise EmptySeries(f"{path}: no data rows")
    if frequency is None:
        frequency = _infer_frequency(stamps) if any_datetime else Frequency.DAILY
    series = TimeSeries(
        values=np.asarray(values),
        timestamps=np.asarray(stamps),
        frequency=frequency,
        name=name or value_column,
    )
    if any_datetime:
        series.check_frequency()
    return series


def _infer_frequency(stamps: Sequence[float]) -> Frequency:
    if len(stamps) < 2:
        return Frequency.DAILY
    delta = float(np.median(np.diff(np.asarray(stamps))))
    best = min(Frequency, key=lambda f: abs(math.log(delta / f.nominal_seconds)))
    return best


def chrono_split(ts: TimeSeries, spec: SplitSpec, task: ForecastTask) -> SplitWindows:
    """Split chronologically into train/val/test forecasting windows.

    Boundaries are computed on raw point counts (floor train, floor val,
    remainder test). Val and test regions are extended back by `input_len`
    points so every region's first target starts exactly at its boundary;
    forecast targets never overlap across splits.
    """
    n = len(ts)
    t, h = task.input_len, task.horizon
    if n < t + h:
        raise SeriesTooShort(f"{ts.name}: {n} points < input_len+horizon = {t + h}")
    n_train = int(n * spec.train_frac)
    n_val = int(n * spec.val_frac)

    def region(lo: int, hi: int) -> tuple[Window, ...]:
        lo = max(lo, 0)
        out = []
        for s in range(lo, hi - (t + h) + 1):
            out.append(Window(start=s, input=ts.values[s:s + t], target=ts.values[s + t:s + t + h]))
        return tuple(out)

    return SplitWindows(
        train=region(0, n_train),
        val=region(n_train - t, n_train + n_val),
        test=region(n_train + n_val - t, n),
        n_train_points=n_train,
        n_val_points=n_val,
        n_total_points=n,
    )


def instance_normalize(window: np.ndarray, epsilon: float = 1e-5) -> tuple[np.ndarray, NormState]:
    """Standardize one window to zero mean and (for nonconstant input) unit variance.

    Constant windows map to all zeros; the recorded state always inverts
    exactly via `denormalize`.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.size == 0:
        raise EmptySeries("cannot normalize an empty window")
    mean = float(window.mean())
    std = float(window.std())
    state = NormState(mean=mean, std=std, epsilon=epsilon)
    return (window - mean) / state.divisor, state


def denormalize(seq: np.ndarray, state: NormState) -> np.ndarray:
    """Affine inverse of `instance_normalize` under the same state."""
    return np.asarray(seq, dtype=np.float64) * state.divisor + state.mean
