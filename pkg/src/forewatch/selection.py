"""Ranking and checkpointed dynamic selection of monitored models.

Models are ordered by the mean of their predicted sMAPEs across series;
adjacent pairs get a Wilcoxon signed-rank significance verdict. Dynamic
selection walks a forecast horizon in periods: at each checkpoint every
pool member's state advances over the newly realized values (parameters
frozen), each re-forecasts the remainder, the monitors predict each
model's error, and the lowest predicted error wins the next period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, UsageError
from .forecasters import FittedForecaster, forecast, update_state
from .monitoring.features import PredictedError
from .series import TimeSeries, smape


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p: float


def _signed_rank_parts(a: Sequence[float], b: Sequence[float]):
    """Differences' doubled ranks, signs, and tie group sizes."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise UsageError(
            f"wilcoxon needs two equal-length 1-d samples, got {x.shape} and {y.shape}"
        )
    if x.size == 0:
        raise UsageError("wilcoxon needs at least one pair")
    d = x - y
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=bool), []
    order = np.argsort(np.abs(d), kind="stable")
    sorted_abs = np.abs(d)[order]
    doubled = np.empty(n, dtype=int)
    tie_sizes = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        # average rank of positions i..j (1-based), doubled to stay integer
        doubled[i : j + 1] = (i + 1) + (j + 1)
        tie_sizes.append(j - i + 1)
        i = j + 1
    ranks = np.empty(n, dtype=int)
    ranks[order] = doubled
    return ranks, d > 0, tie_sizes


def _exact_p(w_obs: float, doubled_ranks: np.ndarray) -> float:
    """P(min(T+, T-) <= w_obs) over all 2^n equally likely sign assignments.

    Subset-sum counting over the doubled (hence integer) ranks; python-int
    counts keep it exact for any n the caller allows.
    """
    n = len(doubled_ranks)
    total = int(doubled_ranks.sum())
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        for s in range(total, r - 1, -1):
            if counts[s - r]:
                counts[s] += counts[s - r]
    w2 = int(round(2.0 * w_obs))
    favored = sum(c for s, c in enumerate(counts) if min(s, total - s) <= w2)
    return favored / (1 << n)


def _normal_p(w: float, n: int, tie_sizes: Sequence[int]) -> float:
    """Two-sided p from the tie-corrected normal approximation."""
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    var -= sum(t**3 - t for t in tie_sizes) / 48.0
    if var <= 0.0:
        return 1.0
    z = (w - mu + 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(-z / math.sqrt(2.0)))


def wilcoxon_signed_rank(
    a: Sequence[float], b: Sequence[float]
) -> WilcoxonResult:
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped; ties in |d| get average ranks. The
    statistic is W = min(W+, W-). For reduced n <= 20 the p-value counts
    all 2^n sign assignments exactly; beyond that a tie-corrected normal
    approximation with continuity correction takes over. No remaining
    pairs means no evidence: p = 1.
    """
    ranks, positive, tie_sizes = _signed_rank_parts(a, b)
    n = len(ranks)
    if n == 0:
        return WilcoxonResult(statistic=0.0, p=1.0)
    w_plus = float(ranks[positive].sum()) / 2.0
    w_minus = float(ranks[~positive].sum()) / 2.0
    w = min(w_plus, w_minus)
    if n <= 20:
        p = _exact_p(w, ranks)
    else:
        p = _normal_p(w, n, tie_sizes)
    return WilcoxonResult(statistic=w, p=p)


@dataclass(frozen=True)
class RankEntry:
    model_id: str
    mean_predicted_smape: float
    per_series_values: tuple[float, ...]


@dataclass(frozen=True)
class Ranking:
    entries: tuple[RankEntry, ...]
    adjacent_significance: tuple[bool, ...]

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        if len(self.adjacent_significance) != max(len(entries) - 1, 0):
            raise UsageError(
                "adjacent_significance must have one entry per adjacent pair"
            )
        lengths = {len(e.per_series_values) for e in entries}
        if len(lengths) > 1:
            raise UsageError(
                f"per_series_values lengths differ: {sorted(lengths)}"
            )
        keys = [(e.mean_predicted_smape, e.model_id) for e in entries]
        if keys != sorted(keys):
            raise UsageError("ranking entries must be sorted ascending")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(
            self, "adjacent_significance", tuple(bool(v) for v in self.adjacent_significance)
        )


SIGNIFICANCE_ALPHA = 0.05


def rank_models(
    per_model_predictions: Mapping[str, Sequence[PredictedError]]
) -> Ranking:
    """Ascending ranking by mean predicted sMAPE with significance flags.

    Every model must cover the same N series in the same order. Adjacent
    pairs are compared with the Wilcoxon signed-rank test on their
    per-series prediction means; a flag is true when p < 0.05.
    """
    if len(per_model_predictions) == 0:
        raise UsageError("per_model_predictions must be non-empty")
    counts = {mid: len(preds) for mid, preds in per_model_predictions.items()}
    if len(set(counts.values())) > 1:
        raise UsageError(f"prediction counts differ per model: {counts}")
    if next(iter(counts.values())) == 0:
        raise UsageError("need predictions for at least one series")
    entries = []
    for model_id in sorted(per_model_predictions):
        values = tuple(p.mean for p in per_model_predictions[model_id])
        entries.append(
            RankEntry(
                model_id=model_id,
                mean_predicted_smape=float(np.mean(values)),
                per_series_values=values,
            )
        )
    entries.sort(key=lambda e: (e.mean_predicted_smape, e.model_id))
    flags = []
    for left, right in zip(entries, entries[1:]):
        result = wilcoxon_signed_rank(
            left.per_series_values, right.per_series_values
        )
        flags.append(result.p < SIGNIFICANCE_ALPHA)
    return Ranking(entries=tuple(entries), adjacent_significance=tuple(flags))


def select_best(ranking: Ranking) -> str:
    """The top-ranked model id."""
    if len(ranking.entries) == 0:
        raise UsageError("cannot select from an empty ranking")
    return ranking.entries[0].model_id


@dataclass(frozen=True)
class CheckpointDecision:
    time_step: int
    chosen_model_id: str
    predicted: tuple[tuple[str, PredictedError], ...]


@dataclass(frozen=True)
class SelectionTrace:
    series_id: str
    horizon_h: int
    period: int
    checkpoints: tuple[CheckpointDecision, ...]
    realized_smape_per_period: tuple[float, ...]
    consumed_forecasts: tuple[float, ...]

    def __post_init__(self) -> None:
        steps = [c.time_step for c in self.checkpoints]
        if steps and steps[0] != 0:
            raise UsageError("first checkpoint must sit at the forecast origin")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise UsageError("checkpoints must be strictly increasing in time")


def _validate_selection_args(
    series: TimeSeries,
    pool: Sequence[FittedForecaster],
    h: int,
    period: int,
) -> np.ndarray:
    if len(pool) == 0:
        raise UsageError("pool must be non-empty")
    if h < 1:
        raise UsageError(f"horizon must be >= 1, got {h}")
    if period < 1 or period > h:
        raise UsageError(f"period must be in [1, {h}], got {period}")
    if series.has_missing:
        raise DataError(f"series {series.id!r} has missing values")
    values = series.to_numpy()
    origin = len(values) - h
    if origin < 1:
        raise UsageError(
            f"series length {len(values)} leaves no observations before the "
            f"h={h} evaluation window"
        )
    for member in pool:
        if member.position != origin:
            raise UsageError(
                f"pool member {member.model_id!r} is positioned at "
                f"{member.position}, expected the forecast origin {origin}"
            )
    ids = [m.model_id for m in pool]
    if len(set(ids)) != len(ids):
        raise UsageError(f"duplicate model ids in pool: {ids}")
    return values


def dynamic_select(
    series: TimeSeries,
    pool: Sequence[FittedForecaster],
    monitors: Mapping[str, object],
    h: int,
    period: int,
) -> SelectionTrace:
    """Re-select the forecasting model at every checkpoint of the horizon.

    The series carries the full actuals; the last h values are the
    evaluation window and every pool member must already be positioned at
    its start. Monitors map model_id to an object with predict_error.
    Realized per-period sMAPEs are computed afterwards and never influence
    the decisions.
    """
    values = _validate_selection_args(series, pool, h, period)
    origin = len(values) - h
    for member in pool:
        if member.model_id not in monitors:
            raise UsageError(f"no monitor for pool member {member.model_id!r}")
    members = {m.model_id: m for m in pool}
    checkpoints: list[CheckpointDecision] = []
    consumed: list[float] = []
    spans: list[tuple[int, int]] = []
    for t in range(0, h, period):
        if t > 0:
            realized = values[origin + t - period : origin + t]
            members = {
                mid: update_state(m, realized) for mid, m in members.items()
            }
        remaining = h - t
        predictions: list[tuple[str, PredictedError]] = []
        bundles = {}
        for mid in sorted(members):
            bundle = forecast(members[mid], remaining)
            bundles[mid] = bundle
            predicted = monitors[mid].predict_error(
                values[: origin + t], bundle, series_id=series.id
            )
            predictions.append((mid, predicted))
        chosen = min(predictions, key=lambda mp: (mp[1].mean, mp[0]))[0]
        take = min(period, remaining)
        consumed.extend(bundles[chosen].values[:take])
        spans.append((t, take))
        checkpoints.append(
            CheckpointDecision(
                time_step=t,
                chosen_model_id=chosen,
                predicted=tuple(predictions),
            )
        )
    realized_per_period = tuple(
        smape(values[origin + t : origin + t + take], consumed[t : t + take]).value
        for t, take in spans
    )
    return SelectionTrace(
        series_id=series.id,
        horizon_h=h,
        period=period,
        checkpoints=tuple(checkpoints),
        realized_smape_per_period=realized_per_period,
        consumed_forecasts=tuple(consumed),
    )


def run_fixed(
    series: TimeSeries,
    model: FittedForecaster,
    h: int,
    period: int,
) -> SelectionTrace:
    """Walk the horizon with one model under the same checkpoint regime.

    Deliberately written as its own loop rather than delegating to
    dynamic_select, so the two can be checked against each other.
    """
    values = _validate_selection_args(series, [model], h, period)
    origin = len(values) - h
    member = model
    checkpoints: list[CheckpointDecision] = []
    consumed: list[float] = []
    spans: list[tuple[int, int]] = []
    t = 0
    while t < h:
        if t > 0:
            member = update_state(member, values[origin + t - period : origin + t])
        remaining = h - t
        bundle = forecast(member, remaining)
        take = min(period, remaining)
        consumed.extend(bundle.values[:take])
        spans.append((t, take))
        checkpoints.append(
            CheckpointDecision(
                time_step=t, chosen_model_id=member.model_id, predicted=()
            )
        )
        t += period
    realized_per_period = tuple(
        smape(values[origin + t : origin + t + take], consumed[t : t + take]).value
        for t, take in spans
    )
    return SelectionTrace(
        series_id=series.id,
        horizon_h=h,
        period=period,
        checkpoints=tuple(checkpoints),
        realized_smape_per_period=realized_per_period,
        consumed_forecasts=tuple(consumed),
    )
