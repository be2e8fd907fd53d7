"""Shared fixture: a 20-seed synthetic evaluation suite.

Each seed builds one drifting-price dataset, trains a GP monitor per pool
member on the train split, and collects everything the statistical
acceptance checks need: realized holdout sMAPEs, monitor and baseline
predictions, and dynamic-selection traces under both trained and oracle
monitors. Built once per test session and shared.
"""

import time
from dataclasses import dataclass, field

import pytest

from forewatch.dataio import SyntheticConfig, generate_synthetic
from forewatch.forecasters import ForecasterSpec, fit, forecast
from forewatch.monitoring import (
    GpTrainConfig,
    OracleMonitor,
    build_error_dataset,
    holdout_baseline,
    train_gp,
)
from forewatch.selection import dynamic_select, run_fixed
from forewatch.series import MIN_FIT_LENGTH, smape

SUITE_SEEDS = tuple(range(20))
SUITE_H = 30
SUITE_PERIOD = 10
SUITE_L = 64
SUITE_POOL = ("damp", "holt", "rw", "ses", "theta")
SUITE_TRAIN_FRACTION = 0.75
SUITE_GP = GpTrainConfig(
    learning_rate=0.05, max_iters=120, subset_size=220, subset_seed=0
)


def suite_config(seed: int) -> SyntheticConfig:
    """One drifting dataset; drift onsets land inside the final-h window."""
    return SyntheticConfig(
        n_series=500,
        length_range=(100, 140),
        base_range=(50.0, 500.0),
        slope_range=(-0.1, 0.4),
        noise_std=0.04,
        drift_probability=0.5,
        drift_onset_range=(0.82, 0.95),
        drift_level_range=(1.3, 1.8),
        drift_slope_range=(0.5, 1.5),
        gap_probability=0.1,
        gap_length_range=(1, 4),
        seed=seed,
    )


@dataclass
class SeedOutcome:
    """Everything one suite seed contributes to the statistical checks."""

    seed: int
    model_ids: tuple
    truths: dict = field(default_factory=dict)
    monitor_preds: dict = field(default_factory=dict)
    baseline_preds: dict = field(default_factory=dict)
    oracle_preds: dict = field(default_factory=dict)
    dynamic_periods: list = field(default_factory=list)
    oracle_periods: list = field(default_factory=list)
    fixed_periods: dict = field(default_factory=dict)

    def monitor_means(self, model_id: str) -> list:
        return [p.mean for p in self.monitor_preds[model_id]]

    def baseline_means(self, model_id: str) -> list:
        return [p.mean for p in self.baseline_preds[model_id]]

    def mean_truth(self, model_id: str) -> float:
        values = self.truths[model_id]
        return sum(values) / len(values)


def _split_series(series_set, fraction, seed):
    import numpy as np

    ordered = sorted(series_set, key=lambda s: s.id)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    n_train = int(round(fraction * len(ordered)))
    train_idx = set(perm[:n_train].tolist())
    train = [s for i, s in enumerate(ordered) if i in train_idx]
    test = [s for i, s in enumerate(ordered) if i not in train_idx]
    return train, test


def run_suite_seed(seed: int) -> SeedOutcome:
    h, period, L = SUITE_H, SUITE_PERIOD, SUITE_L
    specs = [ForecasterSpec(k) for k in SUITE_POOL]
    series_set = [
        s
        for s in generate_synthetic(suite_config(seed))
        if not s.has_missing and len(s) >= MIN_FIT_LENGTH + 2 * h
    ]
    train, test = _split_series(series_set, SUITE_TRAIN_FRACTION, seed)
    outcome = SeedOutcome(seed=seed, model_ids=tuple(s.model_id for s in specs))

    monitors = {}
    for spec in specs:
        data = build_error_dataset(train, spec, h, L)
        monitors[spec.model_id] = train_gp(data, SUITE_GP)
    actuals = {s.id: s.values for s in test}
    oracle_period = OracleMonitor(actuals, chunk=period)
    oracle_full = OracleMonitor(actuals, chunk=None)
    oracles = {spec.model_id: oracle_period for spec in specs}

    for spec in specs:
        outcome.truths[spec.model_id] = []
        outcome.monitor_preds[spec.model_id] = []
        outcome.baseline_preds[spec.model_id] = []
        outcome.oracle_preds[spec.model_id] = []
        outcome.fixed_periods[spec.model_id] = []

    for s in test:
        values = s.to_numpy()
        origin = len(values) - h
        members = []
        for spec in specs:
            member = fit(spec, values[:origin])
            members.append(member)
            bundle = forecast(member, h)
            truth = smape(values[origin:], bundle.values).value
            outcome.truths[spec.model_id].append(truth)
            outcome.monitor_preds[spec.model_id].append(
                monitors[spec.model_id].predict_error(
                    values[:origin], bundle, series_id=s.id
                )
            )
            outcome.baseline_preds[spec.model_id].append(
                holdout_baseline(s, spec, h)
            )
            outcome.oracle_preds[spec.model_id].append(
                oracle_full.predict_error(values[:origin], bundle, series_id=s.id)
            )
        trace = dynamic_select(s, members, monitors, h, period)
        outcome.dynamic_periods.append(trace.realized_smape_per_period)
        oracle_trace = dynamic_select(s, members, oracles, h, period)
        outcome.oracle_periods.append(oracle_trace.realized_smape_per_period)
        for member in members:
            fixed = run_fixed(s, member, h, period)
            outcome.fixed_periods[member.model_id].append(
                fixed.realized_smape_per_period
            )
    return outcome


@dataclass
class Suite:
    outcomes: list
    build_seconds: float


@pytest.fixture(scope="session")
def suite():
    start = time.perf_counter()
    outcomes = [run_suite_seed(seed) for seed in SUITE_SEEDS]
    return Suite(outcomes=outcomes, build_seconds=time.perf_counter() - start)
