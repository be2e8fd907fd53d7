"""Monte-Carlo-dropout feed-forward regression on monitor inputs.

A small fully connected net (two hidden layers of 64 rectified units,
scalar linear output) trained on squared error with Adam-style steps.
Dropout stays active at prediction time: repeated stochastic forward
passes give a sample mean and spread for the predicted sMAPE. Inverted
dropout scaling (mask / (1 - rate)) keeps activations calibrated, so the
same forward code serves training and sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, UsageError
from ..series import ForecastBundle
from .features import ErrorDataset, MonitoringInput, PredictedError, featurize

_HIDDEN = 64


@dataclass(frozen=True)
class McTrainConfig:
    learning_rate: float = 0.001
    epochs: int = 200
    batch_size: int = 128
    dropout_rate: float = 0.5
    seed: int = 0
    mc_samples: int = 100

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be > 0")
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise UsageError(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}"
            )
        if self.mc_samples < 1:
            raise UsageError("mc_samples must be >= 1")


@dataclass(frozen=True)
class DropoutMonitor:
    """Trained net weights plus the sampling configuration."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    dropout_rate: float
    mc_samples: int
    sample_seed: int
    train_log: dict
    monitored_model_id: str = ""
    horizon_h: int = 0

    kind = "mcdropout"

    @property
    def feature_len(self) -> int:
        return self.weights[0].shape[0]

    def predict(self, x: MonitoringInput) -> PredictedError:
        return predict_mcdropout(self, x, mc_samples=self.mc_samples)

    def predict_error(
        self,
        observed,
        forecasts: ForecastBundle,
        series_id: str = "",
    ) -> PredictedError:
        """Featurize (recent history, forecasts) and predict its sMAPE."""
        L = self.feature_len
        obs = np.asarray(observed, dtype=float)
        h = len(forecasts.values)
        keep = L - h
        if keep < 1:
            raise UsageError(
                f"forecast horizon {h} leaves no room for observations at L={L}"
            )
        return self.predict(
            featurize(obs[-keep:], forecasts, L, series_id=series_id)
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _forward(
    X: np.ndarray,
    weights,
    biases,
    rate: float,
    rng: np.random.Generator | None,
):
    """One pass; rng None means deterministic (dropout disabled)."""
    acts = [X]
    masks = []
    a = X
    for layer in range(2):
        z = a @ weights[layer] + biases[layer]
        h = np.maximum(z, 0.0)
        if rng is not None and rate > 0.0:
            mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
        else:
            mask = np.ones_like(h)
        a = h * mask
        acts.append(a)
        masks.append((z, mask))
    out = a @ weights[2] + biases[2]
    return out[:, 0], acts, masks


def train_mcdropout(
    data: ErrorDataset, config: McTrainConfig | None = None
) -> DropoutMonitor:
    """Train the dropout net on an error dataset.

    Mini-batches are reshuffled each epoch from the seeded generator, so
    the same seed reproduces the exact weight trajectory. The train log
    records the deterministic (dropout-off) loss before and after.
    """
    config = config or McTrainConfig()
    if len(data) < 2:
        raise UsageError(f"dropout training needs N >= 2, got {len(data)}")
    X = data.feature_matrix()
    y = data.target_vector()
    n, d = X.shape
    rng = np.random.default_rng(config.seed)
    weights = [
        _glorot(rng, d, _HIDDEN),
        _glorot(rng, _HIDDEN, _HIDDEN),
        _glorot(rng, _HIDDEN, 1),
    ]
    biases = [np.zeros(_HIDDEN), np.zeros(_HIDDEN), np.zeros(1)]

    def det_loss() -> float:
        pred, _, _ = _forward(X, weights, biases, 0.0, None)
        return float(np.mean((pred - y) ** 2))

    initial_loss = det_loss()
    batch = n if n < config.batch_size else config.batch_size
    params = weights + biases
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            xb, yb = X[idx], y[idx]
            pred, acts, masks = _forward(
                xb, weights, biases, config.dropout_rate, rng
            )
            resid = pred - yb
            loss = float(np.mean(resid * resid))
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at step {step}")
            b = len(idx)
            grad_out = (2.0 / b) * resid[:, None]
            grads_w = [None, None, None]
            grads_b = [None, None, None]
            grads_w[2] = acts[2].T @ grad_out
            grads_b[2] = grad_out.sum(axis=0)
            delta = grad_out @ weights[2].T
            for layer in (1, 0):
                z, mask = masks[layer]
                delta = delta * mask * (z > 0.0)
                grads_w[layer] = acts[layer].T @ delta
                grads_b[layer] = delta.sum(axis=0)
                if layer > 0:
                    delta = delta @ weights[layer].T
            step += 1
            grads = grads_w + grads_b
            for i, (p, g) in enumerate(zip(params, grads)):
                m_state[i] = beta1 * m_state[i] + (1 - beta1) * g
                v_state[i] = beta2 * v_state[i] + (1 - beta2) * g * g
                m_hat = m_state[i] / (1 - beta1**step)
                v_hat = v_state[i] / (1 - beta2**step)
                p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

    final_loss = det_loss()
    return DropoutMonitor(
        weights=tuple(w.copy() for w in weights),
        biases=tuple(b.copy() for b in biases),
        dropout_rate=config.dropout_rate,
        mc_samples=config.mc_samples,
        sample_seed=config.seed,
        train_log={
            "initial_loss": initial_loss,
            "final_loss": final_loss,
            "epochs": config.epochs,
        },
        monitored_model_id=data.monitored_model_id,
        horizon_h=data.horizon_h,
    )


def predict_mcdropout(
    model: DropoutMonitor,
    x: MonitoringInput,
    mc_samples: int = 100,
    seed: int | None = None,
) -> PredictedError:
    """Sample stochastic forward passes; mean clipped to [0, 2], std raw.

    With dropout rate 0 (or a single sample) the pass is deterministic and
    std is 0. The sampling generator is seeded per call, so repeated calls
    agree exactly.
    """
    if mc_samples < 1:
        raise UsageError(f"mc_samples must be >= 1, got {mc_samples}")
    q = x.to_numpy()
    if q.shape[0] != model.feature_len:
        raise UsageError(
            f"input has {q.shape[0]} features, model expects {model.feature_len}"
        )
    xb = q[None, :]
    if model.dropout_rate == 0.0:
        pred, _, _ = _forward(xb, model.weights, model.biases, 0.0, None)
        value = float(pred[0])
        return PredictedError(mean=min(max(value, 0.0), 2.0), std=0.0)
    rng = np.random.default_rng(model.sample_seed if seed is None else seed)
    samples = np.empty(mc_samples)
    for s in range(mc_samples):
        pred, _, _ = _forward(
            xb, model.weights, model.biases, model.dropout_rate, rng
        )
        samples[s] = pred[0]
    mean = float(samples.mean())
    std = float(samples.std())
    return PredictedError(mean=min(max(mean, 0.0), 2.0), std=std)
