"""The production watch loop: keep the incumbent or alert and re-select.

At every checkpoint the incumbent model's predicted sMAPE is tested
against a threshold policy. Below threshold (or too uncertain to act),
the incumbent keeps forecasting; above it with a confident prediction,
every pool member is re-ranked by predicted error and the best takes
over. Every decision is logged, and models can be dropped from the pool
without touching any trained monitor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, UsageError
from .forecasters import FittedForecaster, ForecasterSpec, fit, forecast, update_state
from .monitoring.features import PredictedError
from .selection import CheckpointDecision, SelectionTrace, _validate_selection_args
from .series import TimeSeries, smape

KEEP = "keep"
ALERT_AND_RESELECT = "alert_and_reselect"


@dataclass(frozen=True)
class ThresholdPolicy:
    """When to alert: mean above smape_threshold, and (optionally) only
    when the prediction is confident, std below uncertainty_threshold.

    A threshold of 2.0 can never be surpassed (sMAPE is capped there) and
    a non-positive one always is; both degenerate settings are legal and
    useful for calibration runs.
    """

    smape_threshold: float
    uncertainty_threshold: float | None = None
    require_low_uncertainty: bool = False

    def __post_init__(self) -> None:
        tau = float(self.smape_threshold)
        if not math.isfinite(tau) or tau > 2.0:
            raise UsageError(
                f"smape_threshold must be finite and <= 2, got {tau}"
            )
        object.__setattr__(self, "smape_threshold", tau)
        if self.uncertainty_threshold is not None:
            u = float(self.uncertainty_threshold)
            if not math.isfinite(u) or u <= 0:
                raise UsageError(
                    f"uncertainty_threshold must be finite and > 0, got {u}"
                )
            object.__setattr__(self, "uncertainty_threshold", u)
        if self.require_low_uncertainty and self.uncertainty_threshold is None:
            raise UsageError(
                "require_low_uncertainty needs an uncertainty_threshold"
            )


@dataclass(frozen=True)
class Alert:
    """One logged sentinel decision (kept or alerted) for one checkpoint."""

    series_id: str
    model_id: str
    checkpoint: int
    predicted: PredictedError
    policy: ThresholdPolicy
    action: str

    def __post_init__(self) -> None:
        if self.action not in (KEEP, ALERT_AND_RESELECT):
            raise UsageError(f"unknown action {self.action!r}")
        if self.action == ALERT_AND_RESELECT:
            if not self.predicted.mean > self.policy.smape_threshold:
                raise UsageError(
                    "alert recorded below the sMAPE threshold"
                )
            if self.policy.require_low_uncertainty and not (
                self.predicted.std is not None
                and self.predicted.std < self.policy.uncertainty_threshold
            ):
                raise UsageError("alert recorded despite high uncertainty")


def monitor_step(predicted: PredictedError, policy: ThresholdPolicy) -> str:
    """Keep or alert for one predicted error under the policy.

    Alerts require the mean to surpass the threshold strictly; when the
    policy demands low uncertainty, the std must sit strictly below the
    uncertainty threshold as well (an uncertain exceedance is kept, not
    acted on).
    """
    if policy.require_low_uncertainty and predicted.std is None:
        raise UsageError(
            "policy requires low uncertainty but the monitor provides no std"
        )
    if predicted.mean > policy.smape_threshold and (
        not policy.require_low_uncertainty
        or predicted.std < policy.uncertainty_threshold
    ):
        return ALERT_AND_RESELECT
    return KEEP


def sentinel_run(
    series: TimeSeries,
    pool: Sequence[FittedForecaster],
    monitors: Mapping[str, object],
    h: int,
    period: int,
    policy: ThresholdPolicy,
    incumbent: str | None = None,
) -> tuple[SelectionTrace, tuple[Alert, ...]]:
    """Walk the horizon keeping the incumbent until the policy alerts.

    The incumbent defaults to the lexicographically first pool member. At
    an alerting checkpoint all members are predicted and the lowest
    predicted mean takes over (the incumbent itself remains eligible).
    Returns the selection trace plus one Alert per checkpoint.
    """
    values = _validate_selection_args(series, pool, h, period)
    origin = len(values) - h
    members = {m.model_id: m for m in pool}
    for mid in members:
        if mid not in monitors:
            raise UsageError(f"no monitor for pool member {mid!r}")
    if incumbent is None:
        incumbent = min(members)
    elif incumbent not in members:
        raise UsageError(f"incumbent {incumbent!r} is not in the pool")
    checkpoints: list[CheckpointDecision] = []
    alerts: list[Alert] = []
    consumed: list[float] = []
    spans: list[tuple[int, int]] = []
    for t in range(0, h, period):
        if t > 0:
            realized = values[origin + t - period : origin + t]
            members = {
                mid: update_state(m, realized) for mid, m in members.items()
            }
        remaining = h - t
        observed = values[: origin + t]
        incumbent_bundle = forecast(members[incumbent], remaining)
        incumbent_pred = monitors[incumbent].predict_error(
            observed, incumbent_bundle, series_id=series.id
        )
        action = monitor_step(incumbent_pred, policy)
        alerts.append(
            Alert(
                series_id=series.id,
                model_id=incumbent,
                checkpoint=t,
                predicted=incumbent_pred,
                policy=policy,
                action=action,
            )
        )
        if action == ALERT_AND_RESELECT:
            predictions: list[tuple[str, PredictedError]] = []
            bundles = {incumbent: incumbent_bundle}
            for mid in sorted(members):
                if mid == incumbent:
                    predictions.append((mid, incumbent_pred))
                    continue
                bundle = forecast(members[mid], remaining)
                bundles[mid] = bundle
                predictions.append(
                    (
                        mid,
                        monitors[mid].predict_error(
                            observed, bundle, series_id=series.id
                        ),
                    )
                )
            chosen = min(predictions, key=lambda mp: (mp[1].mean, mp[0]))[0]
            decision_preds = tuple(predictions)
            chosen_bundle = bundles[chosen]
            incumbent = chosen
        else:
            chosen = incumbent
            decision_preds = ((incumbent, incumbent_pred),)
            chosen_bundle = incumbent_bundle
        take = min(period, remaining)
        consumed.extend(chosen_bundle.values[:take])
        spans.append((t, take))
        checkpoints.append(
            CheckpointDecision(
                time_step=t, chosen_model_id=chosen, predicted=decision_preds
            )
        )
    realized_per_period = tuple(
        smape(values[origin + t : origin + t + take], consumed[t : t + take]).value
        for t, take in spans
    )
    trace = SelectionTrace(
        series_id=series.id,
        horizon_h=h,
        period=period,
        checkpoints=tuple(checkpoints),
        realized_smape_per_period=realized_per_period,
        consumed_forecasts=tuple(consumed),
    )
    return trace, tuple(alerts)


def run_sentinel(
    series_set: Sequence[TimeSeries],
    pool: Sequence[ForecasterSpec],
    monitors: Mapping[str, object],
    h: int,
    period: int,
    policy: ThresholdPolicy,
) -> dict[str, tuple[SelectionTrace, tuple[Alert, ...]]]:
    """Fit the pool per series and run the sentinel over each horizon.

    Each series must include its final h actuals; pool members are fitted
    on everything before them. Results are keyed and ordered by series id.
    """
    if len(series_set) == 0:
        raise UsageError("series_set must be non-empty")
    out: dict[str, tuple[SelectionTrace, tuple[Alert, ...]]] = {}
    for series in sorted(series_set, key=lambda s: s.id):
        if series.id in out:
            raise DataError(f"duplicate series id {series.id!r}")
        values = series.to_numpy() if not series.has_missing else None
        if values is None:
            raise DataError(f"series {series.id!r} has missing values")
        fitted = [fit(spec, values[: len(values) - h]) for spec in pool]
        out[series.id] = sentinel_run(
            series, fitted, monitors, h, period, policy
        )
    return out


def remove_from_pool(pool: Sequence, model_id: str) -> tuple:
    """Drop one model from a pool of specs or fitted members.

    Monitors are untouched by construction (they live elsewhere). The
    result is ordered by model_id; removing the last member is refused.
    """
    ids = [member.model_id for member in pool]
    if model_id not in ids:
        raise UsageError(
            f"model {model_id!r} is not in the pool ({sorted(ids)})"
        )
    remaining = [m for m in pool if m.model_id != model_id]
    if not remaining:
        raise UsageError("removing the last pool member leaves nothing to run")
    return tuple(sorted(remaining, key=lambda m: m.model_id))
