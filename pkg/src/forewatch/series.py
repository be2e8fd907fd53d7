"""Core time-series types, error metrics, and train/holdout splitting.

A TimeSeries is an ordered price history on an integer step index with
explicit missing markers (None). The two metrics used everywhere are the
symmetric MAPE, bounded in [0, 2], and the RMSE between two value sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UsageError

# Series shorter than this after preprocessing are rejected: too little
# history for a two-parameter smoothing fit to mean anything.
MIN_FIT_LENGTH = 8

METRIC_KINDS = frozenset({"smape", "rmse"})


@dataclass(frozen=True)
class MetricValue:
    """A named scalar metric. smape values are guaranteed to lie in [0, 2]."""

    kind: str
    value: float

    def __post_init__(self) -> None:
        if self.kind not in METRIC_KINDS:
            raise UsageError(f"unknown metric kind {self.kind!r}")
        if not math.isfinite(self.value) or self.value < 0.0:
            raise UsageError(f"{self.kind} value must be finite and >= 0, got {self.value!r}")
        if self.kind == "smape" and self.value > 2.0:
            raise UsageError(f"smape value out of range [0, 2]: {self.value!r}")


@dataclass(frozen=True)
class TimeSeries:
    """One observed series. values[t] is the price at step t, or None if missing.

    Present values must be finite and strictly positive (price domain).
    """

    id: str
    values: tuple[Optional[float], ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("series id must be a non-empty string")
        vals = tuple(None if v is None else float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        for t, v in enumerate(vals):
            if v is None:
                continue
            if not math.isfinite(v) or v <= 0.0:
                raise DataError(
                    f"series {self.id!r}: value at step {t} must be finite and > 0, got {v!r}"
                )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def has_missing(self) -> bool:
        return any(v is None for v in self.values)

    def to_numpy(self) -> np.ndarray:
        """Dense float array of the values. Requires no missing entries."""
        if self.has_missing:
            raise DataError(f"series {self.id!r} still has missing values; fill first")
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class ForecastBundle:
    """h-step forecasts issued by one model for one series.

    origin is the step index of the last observation the forecast was made
    from; values[k] predicts step origin + 1 + k.
    """

    model_id: str
    origin: int
    horizon_h: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.horizon_h < 1:
            raise UsageError(f"horizon_h must be >= 1, got {self.horizon_h}")
        if len(self.values) != self.horizon_h:
            raise UsageError(
                f"forecast bundle for {self.model_id!r}: {len(self.values)} values "
                f"but horizon_h={self.horizon_h}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise UsageError(f"forecast bundle for {self.model_id!r} has non-finite values")


def _as_float_pair(a: Sequence[float], b: Sequence[float], op: str) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.ndim != 1 or y.ndim != 1:
        raise UsageError(f"{op} expects 1-d sequences")
    if len(x) != len(y):
        raise UsageError(f"{op} length mismatch: {len(x)} vs {len(y)}")
    if len(x) == 0:
        raise UsageError(f"{op} requires at least one element")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise UsageError(f"{op} inputs must be finite")
    return x, y


def smape(actual: Sequence[float], forecast: Sequence[float]) -> MetricValue:
    """Symmetric MAPE: (1/h) * sum 2|y - yhat| / (|y| + |yhat|), in [0, 2].

    Undefined (DataError) when any pair has both values equal to zero.
    """
    y, yhat = _as_float_pair(actual, forecast, "smape")
    denom = np.abs(y) + np.abs(yhat)
    zero_pairs = np.nonzero(denom == 0.0)[0]
    if zero_pairs.size:
        raise DataError(f"smape undefined: both values zero at index {int(zero_pairs[0])}")
    value = float(np.mean(2.0 * np.abs(y - yhat) / denom))
    # The mean is mathematically in [0, 2]; clip away last-ulp rounding.
    return MetricValue("smape", min(max(value, 0.0), 2.0))


def rmse(a: Sequence[float], b: Sequence[float]) -> MetricValue:
    """Root mean squared error between two equal-length sequences."""
    x, y = _as_float_pair(a, b, "rmse")
    return MetricValue("rmse", float(np.sqrt(np.mean((x - y) ** 2))))


def fill_missing_nearest_past(series: TimeSeries) -> TimeSeries:
    """Replace each missing value with the nearest present value in the past.

    Leading missing values have no past; they are dropped and the remaining
    steps re-based to index 0. All-missing series are a DataError.
    """
    values = series.values
    first = next((t for t, v in enumerate(values) if v is not None), None)
    if first is None:
        raise DataError(f"series {series.id!r} has no present values")
    filled: list[float] = []
    last = values[first]
    for v in values[first:]:
        if v is not None:
            last = v
        filled.append(last)
    return TimeSeries(series.id, tuple(filled))


def split_train_holdout(series: TimeSeries, h: int) -> tuple[TimeSeries, tuple[float, ...]]:
    """Split into (first len-h points, last h values).

    The series must be filled and long enough to leave a trainable prefix:
    len > h and len >= h + MIN_FIT_LENGTH.
    """
    if h < 1:
        raise UsageError(f"h must be >= 1, got {h}")
    if series.has_missing:
        raise DataError(f"series {series.id!r} has missing values; fill before splitting")
    n = len(series)
    if n <= h or n < h + MIN_FIT_LENGTH:
        raise DataError(
            f"series {series.id!r} too short to split: length {n}, horizon {h} "
            f"(need >= {h + MIN_FIT_LENGTH})"
        )
    train = TimeSeries(series.id, series.values[: n - h])
    holdout = tuple(float(v) for v in series.values[n - h :])
    return train, holdout
