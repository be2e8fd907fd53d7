"""The pool of monitored forecasting models.

Seven model kinds share one interface: ``fit`` estimates parameters on a
training window, ``forecast`` extrapolates h steps, and ``update_state``
advances internal state over newly realized observations with parameters
frozen (models are never refit once deployed).

Kinds
-----
ses    simple exponential smoothing: l_t = a*y_t + (1-a)*l_{t-1}
holt   linear-trend smoothing: l_t = a*y_t + (1-a)*(l_{t-1}+b_{t-1}),
       b_t = B*(l_t-l_{t-1}) + (1-B)*b_{t-1}
damp   holt with damped trend propagation l_{t-1} + phi*b_{t-1} and
       b_t = B*(l_t-l_{t-1}) + (1-B)*phi*b_{t-1}
theta  0.5 * linear-trend line + 0.5 * ses forecast of the theta-2 line
       (2*y - fitted regression line)
comb   elementwise mean of the ses, holt, and damp forecasts
rw     random walk: repeat the last observed value
rf     random forest on sliding lag windows, recursive one-step forecasts

Smoothing parameters are chosen by minimizing in-sample one-step-ahead SSE
over a coarse grid (step 0.05), then one refinement pass (step 0.005) around
the best cell. Initialization: l0 = y_1, b0 = y_2 - y_1.

A multiplicative seasonal adjustment (centered-moving-average indices) is
applied before fitting when the lag-m autocorrelation is significant at the
90% level; forecasts are re-seasonalized by the cyclically repeated indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, UsageError
from .series import ForecastBundle, TimeSeries

KINDS = frozenset({"ses", "holt", "damp", "theta", "comb", "rw", "rf"})

ALPHA_RANGE = (0.01, 0.99)
BETA_RANGE = (0.01, 0.99)
PHI_RANGE = (0.80, 0.99)
COARSE_STEP = 0.05
FINE_STEP = 0.005

RF_DEFAULTS = {"lags": 14, "trees": 100, "min_leaf": 5, "seed": 0}

# 90% two-sided normal quantile for the seasonality significance test.
_SEASONALITY_Z = 1.645


@dataclass(frozen=True)
class ForecasterSpec:
    """What to fit: a model kind plus hyperparameters.

    Recognized hyperparameters: ``m`` (seasonal period, default 1), and for
    rf: ``lags``, ``trees``, ``min_leaf``, ``seed``. model_id defaults to the
    kind name; give explicit ids to carry several configurations of one kind
    in the same pool.
    """

    kind: str
    model_id: str = ""
    hyperparameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise UsageError(f"unknown forecaster kind {self.kind!r}; expected one of {sorted(KINDS)}")
        object.__setattr__(self, "model_id", self.model_id or self.kind)
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))
        m = self.period_m
        if m < 1:
            raise UsageError(f"seasonal period m must be >= 1, got {m}")
        if self.kind == "rf":
            if self.rf_lags < 1:
                raise UsageError(f"rf lag count must be >= 1, got {self.rf_lags}")
            if self.rf_trees < 1:
                raise UsageError(f"rf tree count must be >= 1, got {self.rf_trees}")
            if self.rf_min_leaf < 1:
                raise UsageError(f"rf min_leaf must be >= 1, got {self.rf_min_leaf}")

    @property
    def period_m(self) -> int:
        return int(self.hyperparameters.get("m", 1))

    @property
    def rf_lags(self) -> int:
        return int(self.hyperparameters.get("lags", RF_DEFAULTS["lags"]))

    @property
    def rf_trees(self) -> int:
        return int(self.hyperparameters.get("trees", RF_DEFAULTS["trees"]))

    @property
    def rf_min_leaf(self) -> int:
        return int(self.hyperparameters.get("min_leaf", RF_DEFAULTS["min_leaf"]))

    @property
    def rf_seed(self) -> int:
        return int(self.hyperparameters.get("seed", RF_DEFAULTS["seed"]))


class _Tree:
    """A variance-reduction regression tree grown to purity, min-leaf bounded.

    Stored as parallel node arrays; feature -1 marks a leaf. Splits send
    x[feature] <= threshold to the left child.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value) -> None:
        self.feature = list(feature)
        self.threshold = list(threshold)
        self.left = list(left)
        self.right = list(right)
        self.value = list(value)

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.value[node]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, _Tree):
            return NotImplemented
        return (
            self.feature == other.feature
            and self.threshold == other.threshold
            and self.left == other.left
            and self.right == other.right
            and self.value == other.value
        )

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "_Tree":
        return cls(
            payload["feature"], payload["threshold"], payload["left"],
            payload["right"], payload["value"],
        )


def _grow_tree(X: np.ndarray, y: np.ndarray, min_leaf: int) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def make_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def grow(idx: np.ndarray) -> int:
        node = make_node()
        ys = y[idx]
        n = len(idx)
        value[node] = float(ys.mean())
        if n < 2 * min_leaf or np.all(ys == ys[0]):
            return node
        parent_sse = float(np.sum(ys * ys) - ys.sum() ** 2 / n)
        best_sse = math.inf
        best_feature = -1
        best_thr = 0.0
        for d in range(X.shape[1]):
            xv = X[idx, d]
            order = np.argsort(xv, kind="stable")
            xs = xv[order]
            yo = ys[order]
            c1 = np.cumsum(yo)
            c2 = np.cumsum(yo * yo)
            k = np.arange(1, n)
            valid = (xs[1:] != xs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
            if not valid.any():
                continue
            sse_l = c2[:-1] - c1[:-1] ** 2 / k
            sse_r = (c2[-1] - c2[:-1]) - (c1[-1] - c1[:-1]) ** 2 / (n - k)
            sse = np.where(valid, sse_l + sse_r, math.inf)
            j = int(np.argmin(sse))
            if sse[j] < best_sse:
                best_sse = float(sse[j])
                best_feature = d
                best_thr = float((xs[j] + xs[j + 1]) / 2.0)
        if best_feature < 0 or parent_sse - best_sse <= 1e-12:
            return node
        mask = X[idx, best_feature] <= best_thr
        feature[node] = best_feature
        threshold[node] = best_thr
        left[node] = grow(idx[mask])
        right[node] = grow(idx[~mask])
        return node

    grow(np.arange(len(y)))
    return _Tree(feature, threshold, left, right, value)


@dataclass(frozen=True)
class FittedForecaster:
    """A fitted pool member. Immutable: update_state returns a new value.

    params holds the frozen fitted parameters (alpha/beta/phi, regression
    line coefficients); state holds what advances over time (level, trend,
    last value, lag window). position counts all observations consumed so
    far (train_len at fit time), which also tracks the seasonal phase.
    """

    spec: ForecasterSpec
    params: dict
    state: dict
    train_len: int
    position: int
    seasonal_adjusted: bool
    seasonal_indices: tuple[float, ...]
    components: tuple["FittedForecaster", ...] = ()
    trees: tuple[_Tree, ...] = ()

    @property
    def model_id(self) -> str:
        return self.spec.model_id


def _autocorrelations(y: np.ndarray, max_lag: int) -> np.ndarray | None:
    """r_1..r_max_lag of y; None when the series is constant."""
    dev = y - y.mean()
    denom = float(np.dot(dev, dev))
    if denom == 0.0:
        return None
    r = np.empty(max_lag + 1)
    r[0] = 1.0
    for k in range(1, max_lag + 1):
        r[k] = float(np.dot(dev[k:], dev[:-k])) / denom
    return r


def seasonal_adjust(
    train: Sequence[float], m: int
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Divide out multiplicative seasonal indices when seasonality is significant.

    Seasonality requires length >= 3m and |r_m| > 1.645*sqrt((1 + 2*sum_{k<m}
    r_k^2)/n). Indices come from centered-moving-average ratios averaged per
    phase and normalized to mean 1; deseasonalized[t] = y[t] / s[t mod m].

    Returns (deseasonalized, indices of length m, applied).
    """
    y = np.asarray(train, dtype=float)
    if y.ndim != 1 or len(y) == 0:
        raise UsageError("seasonal_adjust expects a non-empty 1-d sequence")
    if not np.all(np.isfinite(y)):
        raise DataError("seasonal_adjust input must be finite")
    m = int(m)
    if m < 1:
        raise UsageError(f"seasonal period m must be >= 1, got {m}")
    neutral = (y.copy(), np.ones(m), False)
    n = len(y)
    if m == 1 or n < 3 * m:
        return neutral
    r = _autocorrelations(y, m)
    if r is None:
        return neutral
    crit = _SEASONALITY_Z * math.sqrt((1.0 + 2.0 * float(np.sum(r[1:m] ** 2))) / n)
    if abs(r[m]) <= crit:
        return neutral
    if np.any(y <= 0):
        raise DataError("multiplicative seasonal adjustment requires positive values")
    if m % 2 == 0:
        weights = np.full(m + 1, 1.0 / m)
        weights[0] = weights[-1] = 0.5 / m
        offset = m // 2
    else:
        weights = np.full(m, 1.0 / m)
        offset = (m - 1) // 2
    ma = np.convolve(y, weights, mode="valid")
    t = np.arange(len(ma)) + offset
    ratios = y[t] / ma
    indices = np.empty(m)
    for phase in range(m):
        sel = ratios[t % m == phase]
        if sel.size == 0:
            return neutral
        indices[phase] = sel.mean()
    indices *= m / indices.sum()
    return y / indices[np.arange(n) % m], indices, True


def _param_grid(lo: float, hi: float, step: float) -> np.ndarray:
    grid = np.round(np.arange(lo, hi, step), 10)
    if grid[-1] < hi:
        grid = np.append(grid, hi)
    return grid


def _refine_grid(center: float, lo: float, hi: float) -> np.ndarray:
    start = max(lo, center - COARSE_STEP / 2)
    stop = min(hi, center + COARSE_STEP / 2)
    return np.round(np.arange(start, stop + FINE_STEP / 2, FINE_STEP), 10)


def _sse_ses(y: np.ndarray, alphas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead SSE and final level for every candidate alpha."""
    level = np.full(alphas.shape, y[0])
    sse = np.zeros_like(level)
    for t in range(1, len(y)):
        err = y[t] - level
        sse += err * err
        level += alphas * err
    return sse, level


def _sse_trend(
    y: np.ndarray, alphas: np.ndarray, betas: np.ndarray, phis: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-step SSE, final level, and final trend for trend-smoothing candidates."""
    level = np.full(alphas.shape, y[0])
    trend = np.full(alphas.shape, y[1] - y[0])
    sse = np.zeros_like(level)
    for t in range(1, len(y)):
        pred = level + phis * trend
        err = y[t] - pred
        sse += err * err
        new_level = pred + alphas * err
        trend = betas * (new_level - level) + (1.0 - betas) * phis * trend
        level = new_level
    return sse, level, trend


def _fit_ses(y: np.ndarray) -> tuple[dict, dict]:
    coarse = _param_grid(*ALPHA_RANGE, COARSE_STEP)
    sse, level = _sse_ses(y, coarse)
    best = coarse[int(np.argmin(sse))]
    fine = _refine_grid(best, *ALPHA_RANGE)
    sse, level = _sse_ses(y, fine)
    i = int(np.argmin(sse))
    return {"alpha": float(fine[i])}, {"level": float(level[i])}


def _fit_trend(y: np.ndarray, damped: bool) -> tuple[dict, dict]:
    alphas = _param_grid(*ALPHA_RANGE, COARSE_STEP)
    betas = _param_grid(*BETA_RANGE, COARSE_STEP)
    phis = _param_grid(*PHI_RANGE, COARSE_STEP) if damped else np.array([1.0])
    grids = np.meshgrid(alphas, betas, phis, indexing="ij")
    flat = [g.ravel() for g in grids]
    sse, _, _ = _sse_trend(y, *flat)
    i = int(np.argmin(sse))
    center = [float(f[i]) for f in flat]

    alphas = _refine_grid(center[0], *ALPHA_RANGE)
    betas = _refine_grid(center[1], *BETA_RANGE)
    phis = _refine_grid(center[2], *PHI_RANGE) if damped else np.array([1.0])
    grids = np.meshgrid(alphas, betas, phis, indexing="ij")
    flat = [g.ravel() for g in grids]
    sse, level, trend = _sse_trend(y, *flat)
    i = int(np.argmin(sse))
    params = {"alpha": float(flat[0][i]), "beta": float(flat[1][i])}
    if damped:
        params["phi"] = float(flat[2][i])
    return params, {"level": float(level[i]), "trend": float(trend[i])}


def _ols_line(y: np.ndarray) -> tuple[float, float]:
    """Least-squares intercept and slope of y against t = 0..T-1."""
    t = np.arange(len(y), dtype=float)
    t_dev = t - t.mean()
    slope = float(np.dot(t_dev, y - y.mean()) / np.dot(t_dev, t_dev))
    intercept = float(y.mean() - slope * t.mean())
    return intercept, slope


def _fit_theta(y: np.ndarray) -> tuple[dict, dict]:
    a, b = _ols_line(y)
    theta2 = 2.0 * y - (a + b * np.arange(len(y)))
    params, state = _fit_ses(theta2)
    return {"alpha": params["alpha"], "a": a, "b": b}, state


def _fit_rf(y: np.ndarray, spec: ForecasterSpec) -> tuple[tuple[_Tree, ...], dict]:
    lags = spec.rf_lags
    if len(y) <= lags:
        raise DataError(
            f"rf needs more than lags={lags} observations, got {len(y)}"
        )
    n = len(y) - lags
    X = np.empty((n, lags))
    for i in range(n):
        X[i] = y[i : i + lags]
    targets = y[lags:]
    rng = np.random.default_rng(spec.rf_seed)
    trees = []
    for _ in range(spec.rf_trees):
        sample = rng.integers(0, n, n)
        trees.append(_grow_tree(X[sample], targets[sample], spec.rf_min_leaf))
    return tuple(trees), {"window": tuple(float(v) for v in y[-lags:])}


def fit(spec: ForecasterSpec, train: Sequence[float] | TimeSeries) -> FittedForecaster:
    """Fit one pool member on a training window.

    Smoothing parameters (alpha, beta in [0.01, 0.99]; phi in [0.80, 0.99])
    minimize in-sample one-step-ahead SSE via the two-stage grid search; rf
    grows seeded bootstrap trees on lag windows. When the spec carries a
    seasonal period m > 1 and the seasonality test fires, fitting happens on
    the deseasonalized series and the indices are stored for forecasting.
    """
    if isinstance(train, TimeSeries):
        y = train.to_numpy()
    else:
        y = np.asarray(train, dtype=float)
    if y.ndim != 1:
        raise UsageError("fit expects a 1-d training sequence")
    if not np.all(np.isfinite(y)):
        raise DataError("training values must be finite")
    if len(y) < 8:
        raise DataError(f"training window too short: {len(y)} < 8")

    work, indices, applied = seasonal_adjust(y, spec.period_m)

    components: tuple[FittedForecaster, ...] = ()
    trees: tuple[_Tree, ...] = ()
    if spec.kind == "ses":
        params, state = _fit_ses(work)
    elif spec.kind == "holt":
        params, state = _fit_trend(work, damped=False)
    elif spec.kind == "damp":
        params, state = _fit_trend(work, damped=True)
    elif spec.kind == "theta":
        params, state = _fit_theta(work)
    elif spec.kind == "rw":
        params, state = {}, {"last": float(work[-1])}
    elif spec.kind == "comb":
        params, state = {}, {}
        components = tuple(
            _fit_plain(ForecasterSpec(kind, model_id=f"{spec.model_id}.{kind}"), work)
            for kind in ("ses", "holt", "damp")
        )
    else:  # rf
        params = {}
        trees, state = _fit_rf(work, spec)

    return FittedForecaster(
        spec=spec,
        params=params,
        state=state,
        train_len=len(y),
        position=len(y),
        seasonal_adjusted=applied,
        seasonal_indices=tuple(float(s) for s in indices),
        components=components,
        trees=trees,
    )


def _fit_plain(spec: ForecasterSpec, work: np.ndarray) -> FittedForecaster:
    """Fit on an already-deseasonalized window (no seasonal handling)."""
    if spec.kind == "ses":
        params, state = _fit_ses(work)
    elif spec.kind == "holt":
        params, state = _fit_trend(work, damped=False)
    else:
        params, state = _fit_trend(work, damped=True)
    return FittedForecaster(
        spec=spec,
        params=params,
        state=state,
        train_len=len(work),
        position=len(work),
        seasonal_adjusted=False,
        seasonal_indices=(1.0,),
    )


def _point_forecast(model: FittedForecaster, h: int) -> np.ndarray:
    kind = model.spec.kind
    if kind == "ses":
        return np.full(h, model.state["level"])
    if kind == "rw":
        return np.full(h, model.state["last"])
    if kind in ("holt", "damp"):
        level = model.state["level"]
        trend = model.state["trend"]
        phi = model.params.get("phi", 1.0)
        k = np.arange(1, h + 1)
        if phi == 1.0:
            damp_sum = k.astype(float)
        else:
            damp_sum = phi * (1.0 - phi**k) / (1.0 - phi)
        return level + damp_sum * trend
    if kind == "theta":
        a, b = model.params["a"], model.params["b"]
        k = np.arange(1, h + 1)
        line = a + b * (model.position - 1 + k)
        return 0.5 * line + 0.5 * model.state["level"]
    if kind == "comb":
        parts = [_point_forecast(c, h) for c in model.components]
        return np.mean(parts, axis=0)
    # rf: recursive one-step predictions feeding back into the lag window
    window = list(model.state["window"])
    out = np.empty(h)
    for k in range(h):
        x = np.asarray(window, dtype=float)
        pred = float(np.mean([tree.predict_one(x) for tree in model.trees]))
        out[k] = pred
        window = window[1:] + [pred]
    return out


def forecast(model: FittedForecaster, h: int) -> ForecastBundle:
    """Forecast the next h steps from the model's current position."""
    if h < 1:
        raise UsageError(f"forecast horizon must be >= 1, got {h}")
    values = _point_forecast(model, h)
    if model.seasonal_adjusted:
        m = len(model.seasonal_indices)
        s = np.asarray(model.seasonal_indices)
        values = values * s[(model.position + np.arange(h)) % m]
    return ForecastBundle(
        model_id=model.model_id,
        origin=model.position - 1,
        horizon_h=h,
        values=tuple(float(v) for v in values),
    )


def _advance(model: FittedForecaster, xs: np.ndarray) -> tuple[dict, dict, tuple[FittedForecaster, ...]]:
    """Advance state over deseasonalized observations with frozen parameters."""
    kind = model.spec.kind
    params = model.params
    state = dict(model.state)
    components = model.components
    if kind == "ses":
        level = state["level"]
        a = params["alpha"]
        for x in xs:
            level += a * (x - level)
        state["level"] = level
    elif kind in ("holt", "damp"):
        level, trend = state["level"], state["trend"]
        a, b = params["alpha"], params["beta"]
        phi = params.get("phi", 1.0)
        for x in xs:
            pred = level + phi * trend
            new_level = pred + a * (x - pred)
            trend = b * (new_level - level) + (1.0 - b) * phi * trend
            level = new_level
        state["level"], state["trend"] = level, trend
    elif kind == "theta":
        level = state["level"]
        a_coef, b_coef, alpha = params["a"], params["b"], params["alpha"]
        for j, x in enumerate(xs):
            theta2 = 2.0 * x - (a_coef + b_coef * (model.position + j))
            level += alpha * (theta2 - level)
        state["level"] = level
    elif kind == "rw":
        state["last"] = float(xs[-1])
    elif kind == "comb":
        components = tuple(
            replace(c, state=_advance(c, xs)[0], position=c.position + len(xs))
            for c in components
        )
    else:  # rf
        window = list(state["window"]) + [float(x) for x in xs]
        state["window"] = tuple(window[-model.spec.rf_lags :])
    return state, params, components


def update_state(
    model: FittedForecaster, new_observations: Sequence[float]
) -> FittedForecaster:
    """Advance the model over newly realized observations without refitting.

    Smoothing recursions run with frozen (alpha, beta, phi); rw takes the
    last value; theta and rf extend their stored history (regression line
    and trees untouched). Seasonal models deseasonalize the new values at
    their running phase first.
    """
    xs = np.asarray(new_observations, dtype=float)
    if xs.size == 0:
        return model
    if not np.all(np.isfinite(xs)) or np.any(xs <= 0):
        raise DataError("new observations must be finite and > 0")
    if model.seasonal_adjusted:
        m = len(model.seasonal_indices)
        s = np.asarray(model.seasonal_indices)
        xs = xs / s[(model.position + np.arange(len(xs))) % m]
    state, _, components = _advance(model, xs)
    return replace(
        model,
        state=state,
        components=components,
        position=model.position + len(xs),
    )
