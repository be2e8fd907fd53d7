"""CSV ingestion, a synthetic price generator, and JSON persistence.

The CSV layout is one row per series: the id, then the observations,
ragged rows allowed. Empty fields and the literal NA mark missing values.
Fitted forecasters and trained monitors persist to a single JSON registry
document; alert logs persist as newline-delimited JSON.
"""

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DataError, UsageError
from .forecasters import FittedForecaster, ForecasterSpec, _Tree
from .monitoring.features import PredictedError
from .monitoring.gp import GpMonitor, rebuild_gp
from .monitoring.mcdropout import DropoutMonitor
from .sentinel import Alert, ThresholdPolicy
from .series import TimeSeries

REGISTRY_VERSION = "1.0"

_MISSING_TOKENS = ("", "NA")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# CSV


def load_csv(path) -> tuple[TimeSeries, ...]:
    """Read series rows from a delimited file.

    Expected header: ``series_id,v1,v2,...``. Each following row is a series
    id and its values; rows may have differing lengths. Empty fields and NA
    become missing values.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split(",")[0].strip() != "series_id":
        raise DataError(f"{path}: first line must be a header starting with series_id")
    out: list[TimeSeries] = []
    seen: set[str] = set()
    for rownum, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        sid = cells[0].strip()
        if not sid:
            raise DataError(f"{path}: row {rownum} has an empty series id")
        if sid in seen:
            raise DataError(f"{path}: duplicate series id {sid!r} at row {rownum}")
        seen.add(sid)
        values: list[Optional[float]] = []
        for col, token in enumerate(cells[1:], start=2):
            stripped = token.strip()
            if stripped in _MISSING_TOKENS:
                values.append(None)
                continue
            try:
                values.append(float(stripped))
            except ValueError:
                raise DataError(
                    f"{path}: series {sid!r}, row {rownum}, column {col}: "
                    f"cannot parse value {token!r}"
                ) from None
        out.append(TimeSeries(id=sid, values=tuple(values)))
    return tuple(out)


def save_csv(series_set: Sequence[TimeSeries], path) -> None:
    """Write series to the canonical ragged CSV; floats keep full precision."""
    path = os.fspath(path)
    width = max((len(s) for s in series_set), default=0)
    header = "series_id," + ",".join(f"v{k}" for k in range(1, width + 1))
    rows = [header.rstrip(",")]
    for series in series_set:
        cells = [series.id]
        cells += ["" if v is None else repr(v) for v in series.values]
        rows.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# Synthetic generator


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the drifting-price generator.

    Each series draws its own length, base price, trend slope, and seasonal
    amplitude from the configured ranges, then optionally receives a level
    and slope drift from a random onset step, and at most one missing gap.
    """

    n_series: int = 100
    length_range: tuple[int, int] = (120, 400)
    base_range: tuple[float, float] = (50.0, 500.0)
    slope_range: tuple[float, float] = (-0.1, 0.4)
    period_m: int = 1
    amplitude_range: tuple[float, float] = (1.0, 1.0)
    noise_std: float = 0.04
    drift_probability: float = 0.5
    drift_onset_range: tuple[float, float] = (0.7, 0.9)
    drift_level_range: tuple[float, float] = (1.2, 1.8)
    drift_slope_range: tuple[float, float] = (0.0, 1.0)
    gap_probability: float = 0.0
    gap_length_range: tuple[int, int] = (1, 4)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_series < 1:
            raise UsageError(f"n_series must be >= 1, got {self.n_series}")
        if not 2 <= self.length_range[0] <= self.length_range[1]:
            raise UsageError(f"bad length range {self.length_range}")
        if not 0.0 < self.base_range[0] <= self.base_range[1]:
            raise UsageError(f"base price range must be positive, got {self.base_range}")
        if self.slope_range[0] > self.slope_range[1]:
            raise UsageError(f"bad slope range {self.slope_range}")
        if self.period_m < 1:
            raise UsageError(f"seasonal period must be >= 1, got {self.period_m}")
        if not 0.0 < self.amplitude_range[0] <= self.amplitude_range[1] < 2.0:
            raise UsageError(
                f"amplitude range must sit inside (0, 2), got {self.amplitude_range}"
            )
        if self.noise_std < 0.0:
            raise UsageError(f"noise std must be >= 0, got {self.noise_std}")
        for name, p in (
            ("drift_probability", self.drift_probability),
            ("gap_probability", self.gap_probability),
        ):
            if not 0.0 <= p <= 1.0:
                raise UsageError(f"{name} must be in [0, 1], got {p}")
        if not 0.0 <= self.drift_onset_range[0] <= self.drift_onset_range[1] <= 1.0:
            raise UsageError(f"bad drift onset range {self.drift_onset_range}")
        if not 0.0 < self.drift_level_range[0] <= self.drift_level_range[1]:
            raise UsageError(f"bad drift level range {self.drift_level_range}")
        if self.drift_slope_range[0] > self.drift_slope_range[1]:
            raise UsageError(f"bad drift slope range {self.drift_slope_range}")
        if not 1 <= self.gap_length_range[0] <= self.gap_length_range[1]:
            raise UsageError(f"bad gap length range {self.gap_length_range}")
        if self.seed < 0:
            raise UsageError(f"seed must be a non-negative integer, got {self.seed}")


def generate_synthetic(config: SyntheticConfig) -> tuple[TimeSeries, ...]:
    """Deterministic drifting-price series from the config and seed.

    Every series runs on its own generator seeded with seed XOR index, so
    raising n_series extends the collection without changing earlier series.
    """
    out = []
    for i in range(config.n_series):
        rng = np.random.default_rng(config.seed ^ i)
        length = int(rng.integers(config.length_range[0], config.length_range[1] + 1))
        base = float(rng.uniform(*config.base_range))
        slope = float(rng.uniform(*config.slope_range))
        amplitude = float(rng.uniform(*config.amplitude_range))
        noise = rng.standard_normal(length)
        t = np.arange(length)
        season = 1.0 + (amplitude - 1.0) * np.sin(
            2.0 * np.pi * (t % config.period_m) / config.period_m
        )
        values = base * (1.0 + slope * t / length) * season
        values *= 1.0 + config.noise_std * noise
        if rng.uniform() < config.drift_probability:
            onset_frac = float(rng.uniform(*config.drift_onset_range))
            level_mult = float(rng.uniform(*config.drift_level_range))
            slope_change = float(rng.uniform(*config.drift_slope_range))
            onset = int(round(onset_frac * length))
            after = t >= onset
            values[after] *= level_mult * (
                1.0 + slope_change * (t[after] - onset) / length
            )
        values = np.maximum(values, 0.01 * base)
        cells: list[Optional[float]] = [float(v) for v in values]
        if rng.uniform() < config.gap_probability:
            gap_len = int(
                rng.integers(config.gap_length_range[0], config.gap_length_range[1] + 1)
            )
            gap_len = min(gap_len, length - 2)
            if gap_len >= 1:
                start = int(rng.integers(1, length - gap_len))
                cells[start : start + gap_len] = [None] * gap_len
        out.append(TimeSeries(id=f"s{i:05d}", values=tuple(cells)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Object payloads


def serialize_forecaster(model: FittedForecaster) -> dict:
    """JSON-ready payload; nested components and trees included."""
    return {
        "spec": {
            "kind": model.spec.kind,
            "model_id": model.spec.model_id,
            "hyperparameters": dict(model.spec.hyperparameters),
        },
        "params": dict(model.params),
        "state": {
            k: list(v) if isinstance(v, tuple) else v for k, v in model.state.items()
        },
        "train_len": model.train_len,
        "position": model.position,
        "seasonal_adjusted": model.seasonal_adjusted,
        "seasonal_indices": list(model.seasonal_indices),
        "components": [serialize_forecaster(c) for c in model.components],
        "trees": [tree.to_dict() for tree in model.trees],
    }


def deserialize_forecaster(payload: Mapping) -> FittedForecaster:
    try:
        spec = ForecasterSpec(
            kind=payload["spec"]["kind"],
            model_id=payload["spec"]["model_id"],
            hyperparameters=payload["spec"]["hyperparameters"],
        )
        return FittedForecaster(
            spec=spec,
            params=dict(payload["params"]),
            state={
                k: tuple(v) if isinstance(v, list) else v
                for k, v in payload["state"].items()
            },
            train_len=int(payload["train_len"]),
            position=int(payload["position"]),
            seasonal_adjusted=bool(payload["seasonal_adjusted"]),
            seasonal_indices=tuple(float(s) for s in payload["seasonal_indices"]),
            components=tuple(
                deserialize_forecaster(c) for c in payload["components"]
            ),
            trees=tuple(_Tree.from_dict(t) for t in payload["trees"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed forecaster payload: {exc}") from None


def serialize_monitor(monitor) -> dict:
    """JSON-ready payload for a trained monitor; arrays stored flat."""
    if isinstance(monitor, GpMonitor):
        return {
            "kind": "gp",
            "sf2": monitor.sf2,
            "lengthscales": [float(v) for v in monitor.lengthscales],
            "sn2": monitor.sn2,
            "X": {
                "shape": list(monitor.X.shape),
                "data": [float(v) for v in monitor.X.ravel()],
            },
            "y": [float(v) for v in monitor.y],
            "train_log": dict(monitor.train_log),
            "monitored_model_id": monitor.monitored_model_id,
            "horizon_h": monitor.horizon_h,
        }
    if isinstance(monitor, DropoutMonitor):
        return {
            "kind": "mcdropout",
            "weights": [
                {"shape": list(w.shape), "data": [float(v) for v in w.ravel()]}
                for w in monitor.weights
            ],
            "biases": [
                {"shape": list(b.shape), "data": [float(v) for v in b.ravel()]}
                for b in monitor.biases
            ],
            "dropout_rate": monitor.dropout_rate,
            "mc_samples": monitor.mc_samples,
            "sample_seed": monitor.sample_seed,
            "train_log": dict(monitor.train_log),
            "monitored_model_id": monitor.monitored_model_id,
            "horizon_h": monitor.horizon_h,
        }
    raise UsageError(f"cannot serialize monitor of type {type(monitor).__name__}")


def _unflatten(block: Mapping) -> np.ndarray:
    return np.asarray(block["data"], dtype=float).reshape(block["shape"])


def deserialize_monitor(payload: Mapping):
    """Rebuild a monitor; GP factorization caches are recomputed."""
    try:
        kind = payload["kind"]
        if kind == "gp":
            return rebuild_gp(
                float(payload["sf2"]),
                np.asarray(payload["lengthscales"], dtype=float),
                float(payload["sn2"]),
                _unflatten(payload["X"]),
                np.asarray(payload["y"], dtype=float),
                dict(payload["train_log"]),
                payload["monitored_model_id"],
                int(payload["horizon_h"]),
            )
        if kind == "mcdropout":
            return DropoutMonitor(
                weights=tuple(_unflatten(w) for w in payload["weights"]),
                biases=tuple(_unflatten(b) for b in payload["biases"]),
                dropout_rate=float(payload["dropout_rate"]),
                mc_samples=int(payload["mc_samples"]),
                sample_seed=int(payload["sample_seed"]),
                train_log=dict(payload["train_log"]),
                monitored_model_id=payload["monitored_model_id"],
                horizon_h=int(payload["horizon_h"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed monitor payload: {exc}") from None
    raise DataError(f"unknown monitor kind {payload.get('kind')!r}")


# ---------------------------------------------------------------------------
# Registry


@dataclass
class Registry:
    """A versioned store of serialized monitors and fitted forecasters.

    Monitors key on ``model_id::h``; forecasters key on
    ``series_id::model_id``. The maps hold JSON payloads, so equality after
    a save/load round trip is plain structural equality.
    """

    version: str = REGISTRY_VERSION
    monitors: dict = field(default_factory=dict)
    forecasters: dict = field(default_factory=dict)
    created: str = ""
    updated: str = ""

    def put_monitor(self, monitor) -> None:
        if not monitor.monitored_model_id:
            raise UsageError("monitor has no monitored_model_id; cannot key it")
        if "::" in monitor.monitored_model_id:
            raise UsageError("model ids may not contain '::'")
        key = f"{monitor.monitored_model_id}::{monitor.horizon_h}"
        self.monitors[key] = serialize_monitor(monitor)
        self.updated = _utc_now()

    def get_monitor(self, model_id: str, h: int):
        key = f"{model_id}::{h}"
        if key not in self.monitors:
            raise UsageError(f"registry has no monitor for {key}")
        return deserialize_monitor(self.monitors[key])

    def put_forecaster(self, series_id: str, model: FittedForecaster) -> None:
        if "::" in series_id or "::" in model.model_id:
            raise UsageError("ids may not contain '::'")
        key = f"{series_id}::{model.model_id}"
        self.forecasters[key] = serialize_forecaster(model)
        self.updated = _utc_now()

    def get_forecaster(self, series_id: str, model_id: str) -> FittedForecaster:
        key = f"{series_id}::{model_id}"
        if key not in self.forecasters:
            raise UsageError(f"registry has no forecaster for {key}")
        return deserialize_forecaster(self.forecasters[key])


def new_registry() -> Registry:
    now = _utc_now()
    return Registry(created=now, updated=now)


def save_registry(registry: Registry, path) -> None:
    """Atomic single-writer save guarded by an advisory ``<path>.lock``.

    A crash can leave the lock file behind; remove it by hand after making
    sure no other writer is live.
    """
    path = os.fspath(path)
    lock_path = path + ".lock"
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(
            f"registry {path} is locked by another writer ({lock_path} exists)"
        ) from None
    try:
        payload = {
            "version": registry.version,
            "monitors": registry.monitors,
            "forecasters": registry.forecasters,
            "created": registry.created,
            "updated": registry.updated,
        }
        text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
        tmp_path = path + ".tmp"
        with open(tmp_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        os.replace(tmp_path, path)
    finally:
        os.close(lock_fd)
        os.unlink(lock_path)


def load_registry(path) -> Registry:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupted registry JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise DataError(f"{path}: registry document must be a JSON object")
    version = payload.get("version")
    if version != REGISTRY_VERSION:
        raise DataError(
            f"{path}: registry version {version!r} does not match "
            f"reader version {REGISTRY_VERSION!r}"
        )
    return Registry(
        version=version,
        monitors=dict(payload.get("monitors", {})),
        forecasters=dict(payload.get("forecasters", {})),
        created=str(payload.get("created", "")),
        updated=str(payload.get("updated", "")),
    )


# ---------------------------------------------------------------------------
# Alert log


def save_alert_log(alerts: Sequence[Alert], path) -> None:
    """One JSON object per decision, ordered by (series_id, checkpoint)."""
    path = os.fspath(path)
    ordered = sorted(alerts, key=lambda a: (a.series_id, a.checkpoint))
    lines = []
    for alert in ordered:
        lines.append(
            json.dumps(
                {
                    "series_id": alert.series_id,
                    "model_id": alert.model_id,
                    "checkpoint": alert.checkpoint,
                    "predicted": {
                        "mean": alert.predicted.mean,
                        "std": alert.predicted.std,
                    },
                    "policy": {
                        "smape_threshold": alert.policy.smape_threshold,
                        "uncertainty_threshold": alert.policy.uncertainty_threshold,
                        "require_low_uncertainty": alert.policy.require_low_uncertainty,
                    },
                    "action": alert.action,
                },
                sort_keys=True,
                allow_nan=False,
            )
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def load_alert_log(path) -> tuple[Alert, ...]:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    alerts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                alerts.append(
                    Alert(
                        series_id=rec["series_id"],
                        model_id=rec["model_id"],
                        checkpoint=int(rec["checkpoint"]),
                        predicted=PredictedError(
                            mean=rec["predicted"]["mean"],
                            std=rec["predicted"]["std"],
                        ),
                        policy=ThresholdPolicy(
                            smape_threshold=rec["policy"]["smape_threshold"],
                            uncertainty_threshold=rec["policy"][
                                "uncertainty_threshold"
                            ],
                            require_low_uncertainty=rec["policy"][
                                "require_low_uncertainty"
                            ],
                        ),
                        action=rec["action"],
                    )
                )
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: bad JSON: {exc}") from None
            except KeyError as exc:
                raise DataError(
                    f"{path}: line {lineno}: missing field {exc}"
                ) from None
    return tuple(alerts)
