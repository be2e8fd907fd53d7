"""Forecast-error monitoring for deployed univariate forecasting models.

The pieces, in the order a pipeline uses them: series and metrics
(TimeSeries, smape), a pool of forecasters (fit/forecast/update_state),
supervised monitors that predict a forecast's future sMAPE (train_gp,
train_mcdropout), ranking and checkpointed dynamic selection, and the
sentinel loop that turns predicted errors into keep/alert decisions.
"""

from .errors import DataError, ForewatchError, NumericError, UsageError
from .series import (
    MIN_FIT_LENGTH,
    ForecastBundle,
    MetricValue,
    TimeSeries,
    rmse,
    smape,
)
from .forecasters import (
    KINDS,
    FittedForecaster,
    ForecasterSpec,
    fit,
    forecast,
    seasonal_adjust,
    update_state,
)
from .monitoring import (
    DropoutMonitor,
    ErrorDataset,
    GpMonitor,
    GpTrainConfig,
    McTrainConfig,
    MonitoringInput,
    OracleMonitor,
    PredictedError,
    build_error_dataset,
    evaluate_monitor,
    featurize,
    holdout_baseline,
    train_gp,
    train_mcdropout,
)
from .selection import (
    SIGNIFICANCE_ALPHA,
    CheckpointDecision,
    RankEntry,
    Ranking,
    SelectionTrace,
    WilcoxonResult,
    dynamic_select,
    rank_models,
    run_fixed,
    select_best,
    wilcoxon_signed_rank,
)
from .sentinel import (
    ALERT_AND_RESELECT,
    KEEP,
    Alert,
    ThresholdPolicy,
    monitor_step,
    remove_from_pool,
    run_sentinel,
    sentinel_run,
)
from .dataio import (
    Registry,
    SyntheticConfig,
    generate_synthetic,
    load_alert_log,
    load_csv,
    load_registry,
    new_registry,
    save_alert_log,
    save_csv,
    save_registry,
)
from .config import RunConfig, load_config, parse_config

__version__ = "0.1.0"

__all__ = [
    "ALERT_AND_RESELECT",
    "Alert",
    "CheckpointDecision",
    "DataError",
    "DropoutMonitor",
    "ErrorDataset",
    "FittedForecaster",
    "ForecastBundle",
    "ForecasterSpec",
    "ForewatchError",
    "GpMonitor",
    "GpTrainConfig",
    "KEEP",
    "KINDS",
    "McTrainConfig",
    "MetricValue",
    "MIN_FIT_LENGTH",
    "MonitoringInput",
    "NumericError",
    "OracleMonitor",
    "PredictedError",
    "RankEntry",
    "Ranking",
    "Registry",
    "RunConfig",
    "SelectionTrace",
    "SIGNIFICANCE_ALPHA",
    "SyntheticConfig",
    "ThresholdPolicy",
    "TimeSeries",
    "UsageError",
    "WilcoxonResult",
    "build_error_dataset",
    "dynamic_select",
    "evaluate_monitor",
    "featurize",
    "fit",
    "forecast",
    "generate_synthetic",
    "holdout_baseline",
    "load_alert_log",
    "load_config",
    "load_csv",
    "load_registry",
    "monitor_step",
    "new_registry",
    "parse_config",
    "rank_models",
    "remove_from_pool",
    "rmse",
    "run_fixed",
    "run_sentinel",
    "save_alert_log",
    "save_csv",
    "save_registry",
    "seasonal_adjust",
    "select_best",
    "sentinel_run",
    "smape",
    "train_gp",
    "train_mcdropout",
    "update_state",
    "wilcoxon_signed_rank",
]
