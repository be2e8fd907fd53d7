"""Exact Gaussian-process regression on monitor inputs.

Kernel: squared exponential with one lengthscale per input dimension
(automatic relevance determination) plus observation noise,

    k(x, x') = sf2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / ls_d^2),
    K = K_rbf + sn2 * I.

Hyperparameters maximize the log marginal likelihood

    -0.5 * y^T K^-1 y - 0.5 * log|K| - (N/2) * log(2*pi)

by Adam-style gradient ascent in log-parameter space, with Cholesky-based
solves and an escalating jitter ladder when factorization fails. The best
parameters seen are kept, so the trained objective never falls below the
initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, UsageError
from ..series import ForecastBundle
from .features import ErrorDataset, MonitoringInput, PredictedError, featurize

_JITTER_LADDER = (1e-10, 1e-8, 1e-6, 1e-4)

# distance tensors above this footprint fall back to a per-dimension loop
_DISTANCE_CACHE_BYTES = 256 * 1024 * 1024


@dataclass(frozen=True)
class GpTrainConfig:
    """Optimizer settings for marginal-likelihood ascent."""

    learning_rate: float = 0.001
    tol: float = 1e-6
    patience: int = 20
    max_iters: int = 2000
    max_exact_n: int = 4000
    subset_size: int | None = None
    subset_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be > 0")
        if self.max_iters < 1:
            raise UsageError("max_iters must be >= 1")
        if self.patience < 1:
            raise UsageError("patience must be >= 1")
        if self.subset_size is not None and self.subset_size < 2:
            raise UsageError("subset_size must be >= 2")


@dataclass(frozen=True)
class GpMonitor:
    """A trained GP monitor; predictions come from the cached solves."""

    sf2: float
    lengthscales: np.ndarray
    sn2: float
    X: np.ndarray
    y: np.ndarray
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray
    K_inv: np.ndarray
    train_log: dict
    monitored_model_id: str = ""
    horizon_h: int = 0

    kind = "gp"

    def predict(self, x: MonitoringInput) -> PredictedError:
        return predict_gp(self, x)

    def predict_error(
        self,
        observed,
        forecasts: ForecastBundle,
        series_id: str = "",
    ) -> PredictedError:
        """Featurize (recent history, forecasts) and predict its sMAPE."""
        L = self.X.shape[1]
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


def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray | None:
    """(N, N, D) squared-difference tensor, or None when too large to cache."""
    n, d = X.shape
    if n * n * d * 8 > _DISTANCE_CACHE_BYTES:
        return None
    diff = X[:, None, :] - X[None, :, :]
    return diff * diff


def _rbf_kernel(
    X: np.ndarray,
    sf2: float,
    ls2: np.ndarray,
    dist_cache: np.ndarray | None,
) -> np.ndarray:
    """Signal part of the kernel matrix for the current parameters."""
    d = X.shape[1]
    if dist_cache is not None:
        r2 = np.tensordot(dist_cache, 1.0 / ls2, axes=([2], [0]))
    else:
        r2 = np.zeros((X.shape[0], X.shape[0]))
        for j in range(d):
            diff = X[:, j : j + 1] - X[None, :, j]
            r2 += diff * diff / ls2[j]
    return sf2 * np.exp(-0.5 * r2)


def _chol_with_jitter(K: np.ndarray, start: float = 0.0):
    """Cholesky of K (+ escalating jitter). Returns (factor, jitter_used)."""
    ladder = [start] if start > 0.0 else [0.0]
    ladder += [j for j in _JITTER_LADDER if j > (start or 0.0)]
    n = K.shape[0]
    for jit in ladder:
        try:
            return np.linalg.cholesky(K + jit * np.eye(n)), jit
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("factorization failed at maximum jitter")


def _objective_and_grad(
    X: np.ndarray,
    y: np.ndarray,
    log_params: np.ndarray,
    dist_cache: np.ndarray | None,
) -> tuple[float, np.ndarray, float]:
    """Log marginal likelihood, its gradient in log space, jitter used."""
    n, d = X.shape
    ls2 = np.exp(log_params[1 : 1 + d]) ** 2
    K_rbf = _rbf_kernel(X, math.exp(log_params[0]), ls2, dist_cache)
    sn2 = math.exp(log_params[-1])
    K = K_rbf + sn2 * np.eye(n)
    try:
        chol, jitter = _chol_with_jitter(K)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"kernel factorization failed; parameters (log scale): "
            f"{log_params.tolist()}"
        ) from exc
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(chol))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    K_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(n)))
    W = np.outer(alpha, alpha) - K_inv
    grad = np.empty(1 + d + 1)
    WK = W * K_rbf
    grad[0] = 0.5 * float(WK.sum())
    if dist_cache is not None:
        per_dim = np.einsum("ij,ijk->k", WK, dist_cache)
        grad[1 : 1 + d] = 0.5 * per_dim / ls2
    else:
        for j in range(d):
            diff = X[:, j : j + 1] - X[None, :, j]
            grad[1 + j] = 0.5 * float(np.sum(WK * diff * diff)) / ls2[j]
    grad[-1] = 0.5 * sn2 * float(np.trace(W))
    return lml, grad, jitter


def _finalize(
    log_params: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    train_log: dict,
    model_id: str,
    horizon_h: int,
) -> GpMonitor:
    """Cache the solves a trained model needs for prediction."""
    d = X.shape[1]
    return rebuild_gp(
        math.exp(log_params[0]),
        np.exp(log_params[1 : 1 + d]),
        math.exp(log_params[-1]),
        X,
        y,
        train_log,
        model_id,
        horizon_h,
    )


def rebuild_gp(
    sf2: float,
    lengthscales: np.ndarray,
    sn2: float,
    X: np.ndarray,
    y: np.ndarray,
    train_log: dict,
    model_id: str,
    horizon_h: int,
) -> GpMonitor:
    """Reconstruct a monitor from its hyperparameters and training data.

    The cached factorizations are a pure function of (hyperparameters, X, y),
    so a model restored from storage predicts identically to the original.
    """
    n = X.shape[0]
    lengthscales = np.asarray(lengthscales, dtype=float)
    dist_cache = _pairwise_sq_dists(X)
    K_rbf = _rbf_kernel(X, sf2, lengthscales**2, dist_cache)
    K = K_rbf + sn2 * np.eye(n)
    chol, jitter = _chol_with_jitter(K)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    K_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(n)))
    return GpMonitor(
        sf2=sf2,
        lengthscales=lengthscales,
        sn2=sn2,
        X=X,
        y=y,
        jitter=jitter,
        chol=chol,
        alpha=alpha,
        K_inv=K_inv,
        train_log=dict(train_log),
        monitored_model_id=model_id,
        horizon_h=horizon_h,
    )


def train_gp(data: ErrorDataset, config: GpTrainConfig | None = None) -> GpMonitor:
    """Fit GP hyperparameters on an error dataset by marginal-likelihood ascent.

    Initialization: sf2 = max(var(y), 1e-4), every lengthscale 1.0,
    sn2 = max(0.1 * var(y), 1e-6). Raises UsageError when N exceeds the
    exact-inference cap unless subset_size selects a seeded uniform subset.
    """
    config = config or GpTrainConfig()
    if len(data) < 2:
        raise UsageError(f"GP training needs N >= 2, got {len(data)}")
    X = data.feature_matrix()
    y = data.target_vector()
    if config.subset_size is not None and config.subset_size < len(y):
        rng = np.random.default_rng(config.subset_seed)
        keep = np.sort(rng.choice(len(y), size=config.subset_size, replace=False))
        X, y = X[keep], y[keep]
    if len(y) > config.max_exact_n:
        raise UsageError(
            f"N={len(y)} exceeds the exact-inference cap {config.max_exact_n}; "
            f"set subset_size to train on a uniform subset"
        )
    n, d = X.shape
    var_y = float(np.var(y))
    log_params = np.concatenate([
        [math.log(max(var_y, 1e-4))],
        np.zeros(d),
        [math.log(max(0.1 * var_y, 1e-6))],
    ])
    dist_cache = _pairwise_sq_dists(X)

    m = np.zeros_like(log_params)
    v = np.zeros_like(log_params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_obj = -math.inf
    best_params = log_params.copy()
    stall = 0
    iterations = 0
    for it in range(1, config.max_iters + 1):
        obj, grad, _ = _objective_and_grad(X, y, log_params, dist_cache)
        if not math.isfinite(obj):
            raise NumericError(
                f"non-finite marginal likelihood at iteration {it}; "
                f"parameters (log scale): {log_params.tolist()}"
            )
        iterations = it
        if obj > best_obj + config.tol:
            stall = 0
        else:
            stall += 1
        if obj > best_obj:
            best_obj = obj
            best_params = log_params.copy()
        if stall >= config.patience:
            break
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1**it)
        v_hat = v / (1 - beta2**it)
        log_params = log_params + config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

    train_log = {"objective": best_obj, "iterations": iterations}
    return _finalize(
        best_params, X, y, train_log, data.monitored_model_id, data.horizon_h
    )


def predict_gp(model: GpMonitor, x: MonitoringInput) -> PredictedError:
    """Posterior mean (clipped to [0, 2]) and standard deviation at x."""
    q = x.to_numpy()
    if q.shape[0] != model.X.shape[1]:
        raise UsageError(
            f"input has {q.shape[0]} features, model expects {model.X.shape[1]}"
        )
    diff = (model.X - q) / model.lengthscales
    k_star = model.sf2 * np.exp(-0.5 * np.sum(diff * diff, axis=1))
    mean = float(k_star @ model.alpha)
    reduction = float(k_star @ model.K_inv @ k_star)
    var = max(model.sf2 - reduction, 0.0) + model.sn2
    return PredictedError(
        mean=min(max(mean, 0.0), 2.0), std=math.sqrt(var)
    )
