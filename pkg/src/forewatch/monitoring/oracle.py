"""A look-ahead monitor for benchmarking, not deployment.

OracleMonitor answers predict_error with the sMAPE the forecast actually
realizes against held-back actuals. It exists to calibrate evaluations:
any real monitor's selection quality can be compared against the best
decision possible with perfect error knowledge. It requires the full
actual series up front, so it cannot run in a live setting by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError, UsageError
from ..series import ForecastBundle, smape
from .features import PredictedError


@dataclass(frozen=True)
class OracleMonitor:
    """Returns realized sMAPE from stored actuals.

    actuals_by_series maps series id to the complete value sequence. The
    observed prefix passed to predict_error fixes the alignment: forecasts
    are scored against the values that immediately follow it. chunk limits
    scoring to the first chunk forecast steps (e.g. one selection period);
    None scores the whole forecast.
    """

    actuals_by_series: Mapping[str, Sequence[float]]
    chunk: int | None = None

    def __post_init__(self) -> None:
        if self.chunk is not None and self.chunk < 1:
            raise UsageError(f"chunk must be >= 1, got {self.chunk}")
        coerced = {}
        for k, vals in dict(self.actuals_by_series).items():
            if any(v is None for v in vals):
                raise DataError(
                    f"actuals for series {k!r} contain missing values"
                )
            coerced[str(k)] = tuple(float(v) for v in vals)
        object.__setattr__(self, "actuals_by_series", coerced)

    kind = "oracle"

    def predict_error(
        self,
        observed,
        forecasts: ForecastBundle,
        series_id: str = "",
    ) -> PredictedError:
        if series_id not in self.actuals_by_series:
            raise UsageError(f"no stored actuals for series {series_id!r}")
        actuals = self.actuals_by_series[series_id]
        n_obs = len(np.asarray(observed, dtype=float))
        fc = forecasts.values
        k = len(fc) if self.chunk is None else min(self.chunk, len(fc))
        future = actuals[n_obs : n_obs + k]
        if len(future) < k:
            raise DataError(
                f"series {series_id!r} has only {len(future)} actuals beyond "
                f"position {n_obs}, need {k}"
            )
        return PredictedError(mean=smape(future, fc[:k]).value, std=0.0)
