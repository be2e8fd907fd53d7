"""Supervised error-dataset construction for monitor training.

A monitor learns to map (recent observations, a model's forecasts) to the
sMAPE that forecast will realize. Inputs are fixed-length vectors: observed
values and forecast values concatenated, scaled by the mean of the observed
part (sMAPE is scale-free, so the target does not depend on the price
level), and left-padded with zeros so the forecast block always occupies
the same trailing coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError, UsageError
from ..forecasters import ForecasterSpec, fit, forecast
from ..series import ForecastBundle, MetricValue, TimeSeries, rmse, smape


@dataclass(frozen=True)
class MonitoringInput:
    """One featurized (observations, forecasts) pair of fixed length L."""

    features: tuple[float, ...]
    source_series_id: str = ""
    monitored_model_id: str = ""

    def __post_init__(self) -> None:
        feats = tuple(float(v) for v in self.features)
        if len(feats) == 0:
            raise UsageError("MonitoringInput features must be non-empty")
        if not all(np.isfinite(feats)):
            raise DataError("MonitoringInput features must be finite")
        object.__setattr__(self, "features", feats)

    def to_numpy(self) -> np.ndarray:
        return np.asarray(self.features, dtype=float)


@dataclass(frozen=True)
class ErrorDataset:
    """Supervised pairs (inputs, realized sMAPE) for one monitored model."""

    inputs: tuple[MonitoringInput, ...]
    targets: tuple[float, ...]
    horizon_h: int
    monitored_model_id: str

    def __post_init__(self) -> None:
        inputs = tuple(self.inputs)
        targets = tuple(float(t) for t in self.targets)
        if len(inputs) != len(targets):
            raise UsageError(
                f"{len(inputs)} inputs but {len(targets)} targets"
            )
        if len(inputs) == 0:
            raise UsageError("ErrorDataset must contain at least one pair")
        lengths = {len(x.features) for x in inputs}
        if len(lengths) > 1:
            raise UsageError(f"inconsistent feature lengths: {sorted(lengths)}")
        for i, t in enumerate(targets):
            if not (0.0 <= t <= 2.0):
                raise DataError(f"target at position {i} outside [0, 2]: {t}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def feature_len(self) -> int:
        return len(self.inputs[0].features)

    def feature_matrix(self) -> np.ndarray:
        return np.asarray([x.features for x in self.inputs], dtype=float)

    def target_vector(self) -> np.ndarray:
        return np.asarray(self.targets, dtype=float)


@dataclass(frozen=True)
class PredictedError:
    """A monitor's predicted sMAPE: mean in [0, 2], optional spread."""

    mean: float
    std: float | None = None

    def __post_init__(self) -> None:
        mean = float(self.mean)
        if not np.isfinite(mean):
            raise DataError(f"predicted mean must be finite, got {mean}")
        if not (0.0 <= mean <= 2.0):
            raise DataError(f"predicted mean outside [0, 2]: {mean}")
        object.__setattr__(self, "mean", mean)
        if self.std is not None:
            std = float(self.std)
            if not np.isfinite(std) or std < 0:
                raise DataError(f"predicted std must be finite and >= 0, got {std}")
            object.__setattr__(self, "std", std)


def featurize(
    observed: Sequence[float],
    forecasts: ForecastBundle | Sequence[float],
    L: int,
    *,
    series_id: str = "",
) -> MonitoringInput:
    """Build one fixed-length monitor input.

    Concatenates observed values with the forecast values, divides every
    entry by the mean of the observed part, and left-pads with zeros to
    length L. Callers with longer histories truncate to the most recent
    L - h observations first.
    """
    obs = np.asarray(observed, dtype=float)
    if obs.ndim != 1 or obs.size == 0:
        raise UsageError("observed part must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(obs)) or np.any(obs <= 0):
        raise DataError("observed values must be finite and > 0")
    if isinstance(forecasts, ForecastBundle):
        model_id = forecasts.model_id
        fc = np.asarray(forecasts.values, dtype=float)
    else:
        model_id = ""
        fc = np.asarray(forecasts, dtype=float)
        if fc.ndim != 1 or fc.size == 0:
            raise UsageError("forecast part must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(fc)):
            raise DataError("forecast values must be finite")
    combined = obs.size + fc.size
    if combined > L:
        raise UsageError(
            f"observed ({obs.size}) + forecast ({fc.size}) exceeds L={L}; "
            f"truncate observed to its most recent {L - fc.size} points"
        )
    scaled = np.concatenate([obs, fc]) / obs.mean()
    features = np.zeros(L)
    features[L - combined :] = scaled
    return MonitoringInput(
        features=tuple(features),
        source_series_id=series_id,
        monitored_model_id=model_id,
    )


def build_error_dataset(
    series_set: Sequence[TimeSeries],
    model: ForecasterSpec,
    h: int,
    L: int,
    origin_rule=None,
) -> ErrorDataset:
    """One supervised pair per series for the given monitored model.

    For each series the default origin rule reserves the last h values:
    the model is fitted on the first len - h points, forecasts h steps,
    and the realized sMAPE against the held-out values becomes the target.
    origin_rule may be a callable (series_length, h) -> iterable of origins
    to emit several pairs per series.

    Per-series failures are recorded and skipped; if every series fails,
    the first failure is re-raised as a DataError.
    """
    if len(series_set) == 0:
        raise UsageError("series_set must be non-empty")
    if h < 1:
        raise UsageError(f"horizon must be >= 1, got {h}")
    if L < h + 1:
        raise UsageError(f"feature length L={L} cannot hold h={h} forecasts plus observations")

    def default_rule(length: int, horizon: int):
        return (length - horizon,)

    rule = origin_rule or default_rule
    inputs: list[MonitoringInput] = []
    targets: list[float] = []
    failures: list[tuple[str, Exception]] = []
    for series in sorted(series_set, key=lambda s: s.id):
        try:
            if series.has_missing:
                raise DataError(f"series {series.id!r} has missing values")
            values = series.to_numpy()
            for origin in rule(len(values), h):
                origin = int(origin)
                if origin + h > len(values):
                    raise UsageError(
                        f"origin {origin} + h {h} exceeds series length {len(values)}"
                    )
                train = values[:origin]
                fitted = fit(model, train)
                bundle = forecast(fitted, h)
                target = smape(values[origin : origin + h], bundle.values)
                inputs.append(
                    featurize(
                        train[-(L - h) :], bundle, L, series_id=series.id
                    )
                )
                targets.append(target.value)
        except (DataError, UsageError) as exc:
            failures.append((series.id, exc))
    if not inputs:
        sid, exc = failures[0]
        raise DataError(
            f"every series failed; first failure (series {sid!r}): {exc}"
        ) from exc
    return ErrorDataset(
        inputs=tuple(inputs),
        targets=tuple(targets),
        horizon_h=h,
        monitored_model_id=model.model_id,
    )


def holdout_baseline(
    series: TimeSeries, model: ForecasterSpec, h: int
) -> PredictedError:
    """Estimate future sMAPE by cross-validating inside the observed data.

    The last h observed values act as a validation window: the model is
    fitted on everything before it minus the final true future h (fit on
    the first len - 2h points), forecasts h steps, and the validation
    sMAPE is returned as the estimate. No uncertainty is produced.
    """
    if h < 1:
        raise UsageError(f"horizon must be >= 1, got {h}")
    if series.has_missing:
        raise DataError(f"series {series.id!r} has missing values")
    values = series.to_numpy()
    if len(values) < 8 + 2 * h:
        raise DataError(
            f"series {series.id!r} too short for holdout baseline: "
            f"{len(values)} < {8 + 2 * h}"
        )
    split = len(values) - 2 * h
    fitted = fit(model, values[:split])
    bundle = forecast(fitted, h)
    estimate = smape(values[split : split + h], bundle.values)
    return PredictedError(mean=estimate.value, std=None)


def evaluate_monitor(
    predictions: Sequence[PredictedError], truths: Sequence[float]
) -> MetricValue:
    """RMSE between predicted means and realized sMAPEs."""
    if len(predictions) != len(truths):
        raise UsageError(
            f"{len(predictions)} predictions but {len(truths)} truths"
        )
    means = [p.mean for p in predictions]
    return rmse(means, truths)
