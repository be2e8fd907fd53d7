"""Command line harness: generate, evaluate, rank, simulate, sentinel.

Every command is a pure function of its config and input files, writes its
reports under the configured output directory, and prints one summary line
per artifact. Exit codes: 0 success, 1 usage or config error, 2 data error,
3 numeric failure.
"""

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import plotting
from .config import RunConfig, load_config
from .dataio import generate_synthetic, load_csv, save_alert_log, save_csv
from .errors import DataError, NumericError, UsageError
from .forecasters import fit, forecast
from .monitoring import (
    PredictedError,
    build_error_dataset,
    evaluate_monitor,
    holdout_baseline,
    train_gp,
    train_mcdropout,
)
from .reports import Report, curve_report, write_report_csv, write_report_json
from .selection import dynamic_select, rank_models, run_fixed, select_best
from .sentinel import ALERT_AND_RESELECT, run_sentinel
from .series import MIN_FIT_LENGTH, TimeSeries, smape

MonitorFactory = Callable[[str, object], object]


# ---------------------------------------------------------------------------
# Pipeline pieces


def _load_series(cfg: RunConfig) -> tuple[TimeSeries, ...]:
    if cfg.csv_path is not None:
        return load_csv(cfg.csv_path)
    return generate_synthetic(cfg.synthetic)


def _usable(series_set, min_len: int):
    """Split off series the pipeline cannot use; returns (kept, counts)."""
    kept = []
    n_missing = 0
    n_short = 0
    for series in series_set:
        if series.has_missing:
            n_missing += 1
        elif len(series) < min_len:
            n_short += 1
        else:
            kept.append(series)
    if not kept:
        raise DataError(
            f"no usable series: {n_missing} with missing values, "
            f"{n_short} shorter than {min_len}"
        )
    return tuple(kept), {"dropped_missing": n_missing, "dropped_short": n_short}


def _split(series_set, train_fraction: float, seed: int):
    """Seeded per-series split into train and test collections."""
    ordered = sorted(series_set, key=lambda s: s.id)
    n = len(ordered)
    if n < 2:
        raise DataError(f"need at least 2 usable series to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(n - 1, max(1, int(round(train_fraction * n))))
    train_idx = set(perm[:n_train].tolist())
    train = tuple(s for i, s in enumerate(ordered) if i in train_idx)
    test = tuple(s for i, s in enumerate(ordered) if i not in train_idx)
    return train, test


def _train_monitors(
    cfg: RunConfig,
    train_series,
    monitor_factory: Optional[MonitorFactory],
) -> dict:
    monitors = {}
    for spec in cfg.pool:
        data = build_error_dataset(
            train_series, spec, cfg.horizon_h, cfg.feature_len
        )
        if monitor_factory is not None:
            monitors[spec.model_id] = monitor_factory(spec.model_id, data)
        elif cfg.monitor_kind == "gp":
            monitors[spec.model_id] = train_gp(data, cfg.gp_train)
        else:
            monitors[spec.model_id] = train_mcdropout(data, cfg.mc_train)
    return monitors


def _holdout_truth(series: TimeSeries, spec, h: int) -> tuple[PredictedError, float]:
    """Monitor-free pieces for one test series: forecast and realized sMAPE."""
    values = series.to_numpy()
    origin = len(values) - h
    bundle = forecast(fit(spec, values[:origin]), h)
    truth = smape(values[origin:], bundle.values).value
    return bundle, truth


def _ensure_out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _period_count(h: int, period: int) -> int:
    return -(-h // period)


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(cfg: RunConfig) -> Path:
    """Write the synthetic dataset as the canonical CSV."""
    if cfg.synthetic is None:
        raise UsageError("generate needs a synthetic data block in the config")
    series = generate_synthetic(cfg.synthetic)
    out = _ensure_out_dir(cfg)
    path = out / "dataset.csv"
    save_csv(series, path)
    print(f"wrote {len(series)} series to {path}")
    return path


def cmd_evaluate(
    cfg: RunConfig, monitor_factory: Optional[MonitorFactory] = None
) -> Report:
    """Per pool member: monitor RMSE vs holdout-baseline RMSE on test series."""
    h = cfg.horizon_h
    series, counts = _usable(_load_series(cfg), MIN_FIT_LENGTH + 2 * h)
    train, test = _split(series, cfg.train_fraction, cfg.seed)
    monitors = _train_monitors(cfg, train, monitor_factory)
    rows = []
    for spec in cfg.pool:
        try:
            predictions, baselines, truths = [], [], []
            for s in test:
                bundle, truth = _holdout_truth(s, spec, h)
                observed = s.to_numpy()[: len(s) - h]
                predictions.append(
                    monitors[spec.model_id].predict_error(
                        observed, bundle, series_id=s.id
                    )
                )
                baselines.append(holdout_baseline(s, spec, h))
                truths.append(truth)
            rows.append(
                (
                    spec.model_id,
                    "ok",
                    len(test),
                    evaluate_monitor(predictions, truths).value,
                    evaluate_monitor(baselines, truths).value,
                )
            )
        except (DataError, NumericError) as exc:
            rows.append((spec.model_id, f"error: {exc}", len(test), None, None))
    report = Report(
        kind="rmse_table",
        columns=("model_id", "status", "n_series", "monitor_rmse", "baseline_rmse"),
        rows=tuple(rows),
        fingerprint=cfg.fingerprint(),
        seed=cfg.seed,
    )
    out = _ensure_out_dir(cfg)
    write_report_csv(report, out / "rmse_table.csv")
    write_report_json(
        report,
        out / "rmse_table.json",
        extra={"series_used": len(series), **counts},
    )
    print(f"wrote {out / 'rmse_table.csv'} and {out / 'rmse_table.json'}")
    if cfg.figures:
        plotting.save_rmse_figure(report, out / "rmse_table.png")
        print(f"wrote {out / 'rmse_table.png'}")
    return report


def _collect_rank_inputs(cfg, monitors, test):
    h = cfg.horizon_h
    predicted = {}
    realized = {}
    baseline = {}
    for spec in cfg.pool:
        mid = spec.model_id
        predicted[mid], realized[mid], baseline[mid] = [], [], []
        for s in test:
            bundle, truth = _holdout_truth(s, spec, h)
            observed = s.to_numpy()[: len(s) - h]
            predicted[mid].append(
                monitors[mid].predict_error(observed, bundle, series_id=s.id)
            )
            realized[mid].append(PredictedError(mean=truth))
            baseline[mid].append(holdout_baseline(s, spec, h))
    return predicted, realized, baseline


def cmd_rank(
    cfg: RunConfig, monitor_factory: Optional[MonitorFactory] = None
) -> Report:
    """True vs predicted vs baseline model rankings with significance flags."""
    h = cfg.horizon_h
    series, counts = _usable(_load_series(cfg), MIN_FIT_LENGTH + 2 * h)
    train, test = _split(series, cfg.train_fraction, cfg.seed)
    monitors = _train_monitors(cfg, train, monitor_factory)
    predicted, realized, baseline = _collect_rank_inputs(cfg, monitors, test)
    predicted_ranking = rank_models(predicted)
    true_ranking = rank_models(realized)
    baseline_ranking = rank_models(baseline)

    def positions(ranking):
        return {e.model_id: i for i, e in enumerate(ranking.entries)}

    def sig_after(ranking, idx):
        flags = ranking.adjacent_significance
        return flags[idx] if idx < len(flags) else None

    pred_pos = positions(predicted_ranking)
    base_pos = positions(baseline_ranking)
    rows = []
    for i, entry in enumerate(true_ranking.entries):
        mid = entry.model_id
        rows.append(
            (
                mid,
                i + 1,
                entry.mean_predicted_smape,
                pred_pos[mid] + 1,
                predicted_ranking.entries[pred_pos[mid]].mean_predicted_smape,
                base_pos[mid] + 1,
                baseline_ranking.entries[base_pos[mid]].mean_predicted_smape,
                sig_after(true_ranking, i),
                sig_after(predicted_ranking, pred_pos[mid]),
            )
        )
    report = Report(
        kind="ranking_table",
        columns=(
            "model_id",
            "true_rank",
            "true_mean",
            "predicted_rank",
            "predicted_mean",
            "baseline_rank",
            "baseline_mean",
            "true_significant_vs_next",
            "predicted_significant_vs_next",
        ),
        rows=tuple(rows),
        fingerprint=cfg.fingerprint(),
        seed=cfg.seed,
    )
    out = _ensure_out_dir(cfg)
    write_report_csv(report, out / "ranking_table.csv")
    write_report_json(
        report,
        out / "ranking_table.json",
        extra={
            "selected": select_best(predicted_ranking),
            "true_order": [e.model_id for e in true_ranking.entries],
            "predicted_order": [e.model_id for e in predicted_ranking.entries],
            "baseline_order": [e.model_id for e in baseline_ranking.entries],
            "series_used": len(series),
            **counts,
        },
    )
    print(f"wrote {out / 'ranking_table.csv'} and {out / 'ranking_table.json'}")
    if cfg.figures:
        plotting.save_ranking_figure(report, out / "ranking_table.png")
        print(f"wrote {out / 'ranking_table.png'}")
    return report


def cmd_simulate(
    cfg: RunConfig, monitor_factory: Optional[MonitorFactory] = None
) -> Report:
    """Dynamic selection vs every fixed pool member, per period."""
    h, period = cfg.horizon_h, cfg.period
    series, counts = _usable(_load_series(cfg), MIN_FIT_LENGTH + h)
    train, test = _split(series, cfg.train_fraction, cfg.seed)
    monitors = _train_monitors(cfg, train, monitor_factory)
    n_periods = _period_count(h, period)
    per_strategy = {"dynamic": [[] for _ in range(n_periods)]}
    for spec in cfg.pool:
        per_strategy[spec.model_id] = [[] for _ in range(n_periods)]
    for s in test:
        values = s.to_numpy()
        members = [fit(spec, values[: len(s) - h]) for spec in cfg.pool]
        trace = dynamic_select(s, members, monitors, h, period)
        for idx, smape_value in enumerate(trace.realized_smape_per_period):
            per_strategy["dynamic"][idx].append(smape_value)
        for member in members:
            fixed = run_fixed(s, member, h, period)
            for idx, smape_value in enumerate(fixed.realized_smape_per_period):
                per_strategy[member.model_id][idx].append(smape_value)
    report = curve_report(
        "selection_curve", per_strategy, cfg.fingerprint(), cfg.seed
    )
    out = _ensure_out_dir(cfg)
    write_report_csv(report, out / "selection_curve.csv")
    write_report_json(
        report,
        out / "selection_curve.json",
        extra={
            "full_horizon": {
                name: sum(sum(p) for p in periods) / sum(len(p) for p in periods)
                for name, periods in sorted(per_strategy.items())
            },
            "series_used": len(series),
            **counts,
        },
    )
    print(f"wrote {out / 'selection_curve.csv'} and {out / 'selection_curve.json'}")
    if cfg.figures:
        plotting.save_curve_figure(
            report, out / "selection_curve.png", "Dynamic selection vs fixed models"
        )
        print(f"wrote {out / 'selection_curve.png'}")
    return report


def cmd_sentinel(
    cfg: RunConfig, monitor_factory: Optional[MonitorFactory] = None
) -> Report:
    """Threshold-gated selection with an alert log."""
    h, period = cfg.horizon_h, cfg.period
    series, counts = _usable(_load_series(cfg), MIN_FIT_LENGTH + h)
    train, test = _split(series, cfg.train_fraction, cfg.seed)
    monitors = _train_monitors(cfg, train, monitor_factory)
    results = run_sentinel(test, cfg.pool, monitors, h, period, cfg.policy)
    n_periods = _period_count(h, period)
    per_strategy = {"sentinel": [[] for _ in range(n_periods)]}
    for spec in cfg.pool:
        per_strategy[spec.model_id] = [[] for _ in range(n_periods)]
    all_alerts = []
    for s in test:
        trace, alerts = results[s.id]
        all_alerts.extend(alerts)
        for idx, smape_value in enumerate(trace.realized_smape_per_period):
            per_strategy["sentinel"][idx].append(smape_value)
        values = s.to_numpy()
        for spec in cfg.pool:
            member = fit(spec, values[: len(s) - h])
            fixed = run_fixed(s, member, h, period)
            for idx, smape_value in enumerate(fixed.realized_smape_per_period):
                per_strategy[spec.model_id][idx].append(smape_value)
    report = curve_report("sentinel_log", per_strategy, cfg.fingerprint(), cfg.seed)
    reselections = [a for a in all_alerts if a.action == ALERT_AND_RESELECT]
    alert_counts = {}
    for alert in reselections:
        alert_counts[alert.checkpoint] = alert_counts.get(alert.checkpoint, 0) + 1
    out = _ensure_out_dir(cfg)
    write_report_csv(report, out / "sentinel_curve.csv")
    save_alert_log(all_alerts, out / "sentinel_log.ndjson")
    write_report_json(
        report,
        out / "sentinel_log.json",
        extra={
            "n_decisions": len(all_alerts),
            "n_reselections": len(reselections),
            "reselections_per_checkpoint": {
                str(k): v for k, v in sorted(alert_counts.items())
            },
            "series_used": len(series),
            **counts,
        },
    )
    print(
        f"wrote {out / 'sentinel_curve.csv'}, {out / 'sentinel_log.json'} "
        f"and {out / 'sentinel_log.ndjson'}"
    )
    if cfg.figures:
        plotting.save_sentinel_figure(
            report, alert_counts, out / "sentinel_curve.png"
        )
        print(f"wrote {out / 'sentinel_curve.png'}")
    return report


# ---------------------------------------------------------------------------
# Argument handling


class _Parser(argparse.ArgumentParser):
    """Argparse variant that reports problems as usage errors."""

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="forewatch",
        description="Monitor deployed forecasting models by predicting their sMAPE.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("generate", "write a synthetic dataset CSV"),
        ("evaluate", "monitor RMSE vs holdout baseline per pool member"),
        ("rank", "true vs predicted model rankings"),
        ("simulate", "checkpointed dynamic selection curves"),
        ("sentinel", "threshold-gated selection with an alert log"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--data", help="CSV path overriding the config data block")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, help="seed override")
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "rank": cmd_rank,
    "simulate": cmd_simulate,
    "sentinel": cmd_sentinel,
}


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.data is not None:
        cfg = dataclasses.replace(cfg, csv_path=args.data, synthetic=None)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _apply_overrides(load_config(args.config), args)
        _COMMANDS[args.command](cfg)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:
        return int(exc.code or 0)


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
