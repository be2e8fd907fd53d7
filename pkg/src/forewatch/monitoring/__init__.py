"""Monitors that predict a deployed forecasting model's future sMAPE."""

from .features import (
    ErrorDataset,
    MonitoringInput,
    PredictedError,
    build_error_dataset,
    evaluate_monitor,
    featurize,
    holdout_baseline,
)
from .gp import GpMonitor, GpTrainConfig, predict_gp, rebuild_gp, train_gp
from .mcdropout import (
    DropoutMonitor,
    McTrainConfig,
    predict_mcdropout,
    train_mcdropout,
)
from .oracle import OracleMonitor

__all__ = [
    "DropoutMonitor",
    "ErrorDataset",
    "GpMonitor",
    "GpTrainConfig",
    "McTrainConfig",
    "MonitoringInput",
    "OracleMonitor",
    "PredictedError",
    "build_error_dataset",
    "evaluate_monitor",
    "featurize",
    "holdout_baseline",
    "predict_gp",
    "predict_mcdropout",
    "rebuild_gp",
    "train_gp",
    "train_mcdropout",
]
