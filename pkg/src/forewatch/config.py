"""Run configuration: JSON schema, validation, and fingerprinting."""

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Optional

from .errors import UsageError
from .dataio import SyntheticConfig
from .forecasters import ForecasterSpec
from .monitoring import GpTrainConfig, McTrainConfig
from .sentinel import ThresholdPolicy
from .series import MIN_FIT_LENGTH

DEFAULT_POOL = ("ses", "holt", "damp", "theta", "comb", "rw")

_TOP_KEYS = {
    "data",
    "horizon",
    "feature_len",
    "train_fraction",
    "monitor",
    "pool",
    "period",
    "policy",
    "seed",
    "out_dir",
    "figures",
}

_GP_KEYS = {
    "learning_rate",
    "tol",
    "patience",
    "max_iters",
    "max_exact_n",
    "subset_size",
    "subset_seed",
}
_MC_KEYS = {
    "learning_rate",
    "epochs",
    "batch_size",
    "dropout_rate",
    "seed",
    "mc_samples",
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one command run depends on.

    Exactly one of csv_path / synthetic supplies the data. The pool is kept
    sorted by model id so two configs listing the same members in different
    order are the same run.
    """

    csv_path: Optional[str]
    synthetic: Optional[SyntheticConfig]
    horizon_h: int
    feature_len: int
    train_fraction: float
    monitor_kind: str
    gp_train: GpTrainConfig
    mc_train: McTrainConfig
    pool: tuple[ForecasterSpec, ...]
    period: int
    policy: ThresholdPolicy
    seed: int
    out_dir: str
    figures: bool

    def __post_init__(self) -> None:
        if (self.csv_path is None) == (self.synthetic is None):
            raise UsageError("config needs exactly one data source: csv or synthetic")
        if self.horizon_h < 1:
            raise UsageError(f"horizon must be >= 1, got {self.horizon_h}")
        if self.feature_len < self.horizon_h + MIN_FIT_LENGTH:
            raise UsageError(
                f"feature_len must be at least horizon + {MIN_FIT_LENGTH}, "
                f"got {self.feature_len} for horizon {self.horizon_h}"
            )
        if not 0.0 < self.train_fraction < 1.0:
            raise UsageError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )
        if self.monitor_kind not in ("gp", "mcdropout"):
            raise UsageError(
                f"monitor kind must be gp or mcdropout, got {self.monitor_kind!r}"
            )
        if not self.pool:
            raise UsageError("pool must name at least one forecaster")
        ids = [spec.model_id for spec in self.pool]
        if len(set(ids)) != len(ids):
            raise UsageError(f"pool has duplicate model ids: {sorted(ids)}")
        object.__setattr__(
            self, "pool", tuple(sorted(self.pool, key=lambda s: s.model_id))
        )
        if not 1 <= self.period <= self.horizon_h:
            raise UsageError(
                f"period must lie in [1, horizon], got {self.period} "
                f"for horizon {self.horizon_h}"
            )
        if self.seed < 0:
            raise UsageError(f"seed must be a non-negative integer, got {self.seed}")

    def fingerprint(self) -> str:
        """Stable 16-hex-digit hash of the semantic fields.

        Output location and figure rendering do not change what a run
        computes, so they stay out of the hash.
        """
        semantic = {
            "csv_path": self.csv_path,
            "synthetic": None
            if self.synthetic is None
            else _dataclass_dict(self.synthetic),
            "horizon": self.horizon_h,
            "feature_len": self.feature_len,
            "train_fraction": self.train_fraction,
            "monitor_kind": self.monitor_kind,
            "gp_train": _dataclass_dict(self.gp_train),
            "mc_train": _dataclass_dict(self.mc_train),
            "pool": [
                {
                    "kind": s.kind,
                    "model_id": s.model_id,
                    "hyperparameters": dict(sorted(s.hyperparameters.items())),
                }
                for s in self.pool
            ],
            "period": self.period,
            "policy": {
                "smape_threshold": self.policy.smape_threshold,
                "uncertainty_threshold": self.policy.uncertainty_threshold,
                "require_low_uncertainty": self.policy.require_low_uncertainty,
            },
            "seed": self.seed,
        }
        canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _dataclass_dict(obj) -> dict:
    out = {}
    for name in obj.__dataclass_fields__:
        value = getattr(obj, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


def _check_keys(block: dict, allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise UsageError(f"unknown {where} keys: {sorted(unknown)}")


def _parse_pool(entries) -> tuple[ForecasterSpec, ...]:
    specs = []
    for entry in entries:
        if isinstance(entry, str):
            specs.append(ForecasterSpec(entry))
        elif isinstance(entry, dict):
            _check_keys(
                entry, {"kind", "model_id", "hyperparameters"}, "pool entry"
            )
            if "kind" not in entry:
                raise UsageError(f"pool entry needs a kind: {entry}")
            specs.append(
                ForecasterSpec(
                    kind=entry["kind"],
                    model_id=entry.get("model_id", ""),
                    hyperparameters=entry.get("hyperparameters", {}),
                )
            )
        else:
            raise UsageError(f"pool entries are names or objects, got {entry!r}")
    return tuple(specs)


def _parse_synthetic(block: dict) -> SyntheticConfig:
    allowed = set(SyntheticConfig.__dataclass_fields__)
    _check_keys(block, allowed, "synthetic")
    kwargs = {}
    for key, value in block.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return SyntheticConfig(**kwargs)


def parse_config(document: dict) -> RunConfig:
    """Build a validated RunConfig from a parsed JSON document."""
    if not isinstance(document, dict):
        raise UsageError("config document must be a JSON object")
    _check_keys(document, _TOP_KEYS, "config")
    if "data" not in document:
        raise UsageError("config needs a data block: {'csv': path} or {'synthetic': {...}}")
    data = document["data"]
    if not isinstance(data, dict):
        raise UsageError("data block must be an object")
    _check_keys(data, {"csv", "synthetic"}, "data")
    csv_path = data.get("csv")
    synthetic = (
        _parse_synthetic(data["synthetic"]) if "synthetic" in data else None
    )

    monitor = dict(document.get("monitor", {"kind": "gp"}))
    kind = monitor.pop("kind", "gp")
    gp_train = GpTrainConfig()
    mc_train = McTrainConfig()
    if kind == "gp":
        _check_keys(monitor, _GP_KEYS, "monitor")
        gp_train = GpTrainConfig(**monitor)
    elif kind == "mcdropout":
        _check_keys(monitor, _MC_KEYS, "monitor")
        mc_train = McTrainConfig(**monitor)

    policy_block = dict(
        document.get(
            "policy",
            {
                "smape_threshold": 0.02,
                "uncertainty_threshold": 0.01,
                "require_low_uncertainty": True,
            },
        )
    )
    _check_keys(
        policy_block,
        {"smape_threshold", "uncertainty_threshold", "require_low_uncertainty"},
        "policy",
    )
    policy = ThresholdPolicy(**policy_block)

    return RunConfig(
        csv_path=csv_path,
        synthetic=synthetic,
        horizon_h=int(document.get("horizon", 30)),
        feature_len=int(document.get("feature_len", 128)),
        train_fraction=float(document.get("train_fraction", 0.75)),
        monitor_kind=kind,
        gp_train=gp_train,
        mc_train=mc_train,
        pool=_parse_pool(document.get("pool", list(DEFAULT_POOL))),
        period=int(document.get("period", 10)),
        policy=policy,
        seed=int(document.get("seed", 0)),
        out_dir=str(document.get("out_dir", "out")),
        figures=bool(document.get("figures", True)),
    )


def load_config(path) -> RunConfig:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise UsageError(f"no such config file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: config is not valid JSON: {exc}") from None
    return parse_config(document)
