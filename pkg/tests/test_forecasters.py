"""Tests for the forecasting model pool."""

import numpy as np
import pytest

from forewatch.errors import DataError, UsageError
from forewatch.forecasters import (
    ALPHA_RANGE,
    BETA_RANGE,
    COARSE_STEP,
    PHI_RANGE,
    FittedForecaster,
    ForecasterSpec,
    _grow_tree,
    _param_grid,
    _sse_ses,
    _sse_trend,
    fit,
    forecast,
    seasonal_adjust,
    update_state,
)

SEASONAL_PATTERN = (0.8, 1.2, 0.9, 1.1)


def seasonal_series(n=40, base=10.0, pattern=SEASONAL_PATTERN):
    return [base * pattern[t % len(pattern)] for t in range(n)]


class TestSeasonalAdjust:
    def test_recovers_known_indices(self):
        desea, indices, applied = seasonal_adjust(seasonal_series(), 4)
        assert applied
        # [DERIVED] centered-MA ratios of an exact repeating pattern with
        # mean-1 indices reproduce the pattern itself.
        np.testing.assert_allclose(indices, SEASONAL_PATTERN, atol=0.05)
        np.testing.assert_allclose(desea, 10.0, atol=0.5)

    def test_noisy_recovery_within_tolerance(self):
        rng = np.random.default_rng(7)
        y = np.asarray(seasonal_series(120)) * (1 + 0.02 * rng.standard_normal(120))
        _, indices, applied = seasonal_adjust(y, 4)
        assert applied
        np.testing.assert_allclose(indices, SEASONAL_PATTERN, atol=0.05)

    def test_period_one_is_neutral(self):
        y = seasonal_series()
        desea, indices, applied = seasonal_adjust(y, 1)
        assert not applied
        assert indices.tolist() == [1.0]
        np.testing.assert_array_equal(desea, y)

    def test_short_series_is_neutral(self):
        desea, indices, applied = seasonal_adjust(seasonal_series(11), 4)
        assert not applied
        np.testing.assert_array_equal(indices, np.ones(4))

    def test_white_noise_not_significant(self):
        rng = np.random.default_rng(3)
        fired = 0
        for _ in range(50):
            y = 10 + rng.standard_normal(60)
            _, _, applied = seasonal_adjust(y, 4)
            fired += applied
        # 90% gate on noise: roughly one in ten false positives, not most.
        assert fired <= 15

    def test_constant_series_is_neutral(self):
        _, _, applied = seasonal_adjust(np.full(40, 5.0), 4)
        assert not applied

    def test_nonpositive_seasonal_values_rejected(self):
        # long enough that one zero does not kill the significance test
        y = np.asarray(seasonal_series(200))
        y[5] = 0.0
        with pytest.raises(DataError):
            seasonal_adjust(y, 4)

    def test_bad_period(self):
        with pytest.raises(UsageError):
            seasonal_adjust([1.0, 2.0], 0)

    def test_indices_mean_one(self):
        rng = np.random.default_rng(11)
        y = np.asarray(seasonal_series(80)) * (1 + 0.05 * rng.standard_normal(80))
        _, indices, applied = seasonal_adjust(y, 4)
        assert applied
        assert abs(indices.mean() - 1.0) < 1e-12


class TestSmoothingRecursions:
    def test_ses_hand_recursion(self):
        # l0 = 10; err = 20 - 10 = 10; level = 10 + 0.5 * 10 = 15.
        sse, level = _sse_ses(np.array([10.0, 20.0]), np.array([0.5]))
        assert level[0] == 15.0
        assert sse[0] == 100.0

    def test_ses_update_hand(self):
        spec = ForecasterSpec("ses")
        model = FittedForecaster(
            spec=spec, params={"alpha": 0.5}, state={"level": 15.0},
            train_len=2, position=2, seasonal_adjusted=False,
            seasonal_indices=(1.0,),
        )
        updated = update_state(model, [25.0])
        # 15 + 0.5 * (25 - 15) = 20
        assert updated.state["level"] == 20.0
        assert updated.position == 3
        assert forecast(updated, 3).values == (20.0, 20.0, 20.0)

    def test_holt_zero_error_on_exact_line(self):
        y = np.arange(1.0, 13.0)
        model = fit(ForecasterSpec("holt"), y)
        assert model.state["level"] == pytest.approx(12.0)
        assert model.state["trend"] == pytest.approx(1.0)
        np.testing.assert_allclose(
            forecast(model, 4).values, [13.0, 14.0, 15.0, 16.0], atol=1e-9
        )

    def test_damp_with_phi_one_matches_holt(self):
        sse_h, lev_h, tr_h = _sse_trend(
            np.array([3.0, 5.0, 4.0, 6.0, 7.0]),
            np.array([0.3]), np.array([0.2]), np.array([1.0]),
        )
        spec = ForecasterSpec("holt")
        model = FittedForecaster(
            spec=spec, params={"alpha": 0.3, "beta": 0.2},
            state={"level": float(lev_h[0]), "trend": float(tr_h[0])},
            train_len=5, position=5, seasonal_adjusted=False,
            seasonal_indices=(1.0,),
        )
        damp = FittedForecaster(
            spec=ForecasterSpec("damp", model_id="d"),
            params={"alpha": 0.3, "beta": 0.2, "phi": 1.0},
            state=dict(model.state), train_len=5, position=5,
            seasonal_adjusted=False, seasonal_indices=(1.0,),
        )
        np.testing.assert_allclose(
            forecast(damp, 6).values, forecast(model, 6).values, atol=1e-12
        )

    def test_damped_sum_matches_literal_sum(self):
        phi = 0.9
        model = FittedForecaster(
            spec=ForecasterSpec("damp"),
            params={"alpha": 0.5, "beta": 0.1, "phi": phi},
            state={"level": 2.0, "trend": 1.5}, train_len=8, position=8,
            seasonal_adjusted=False, seasonal_indices=(1.0,),
        )
        got = forecast(model, 5).values
        expected = [
            2.0 + 1.5 * sum(phi**j for j in range(1, k + 1)) for k in range(1, 6)
        ]
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_trend_update_matches_filter_rerun(self):
        rng = np.random.default_rng(5)
        y = 10 + np.cumsum(rng.standard_normal(30) * 0.3)
        y = np.abs(y) + 1.0
        for kind in ("holt", "damp"):
            model = fit(ForecasterSpec(kind), y[:20])
            updated = update_state(model, y[20:])
            a = model.params["alpha"]
            b = model.params["beta"]
            phi = model.params.get("phi", 1.0)
            sse, level, trend = _sse_trend(
                y, np.array([a]), np.array([b]), np.array([phi])
            )
            assert updated.state["level"] == pytest.approx(float(level[0]), abs=1e-9)
            assert updated.state["trend"] == pytest.approx(float(trend[0]), abs=1e-9)


class TestGridSearch:
    def test_param_grid_covers_endpoints(self):
        grid = _param_grid(*ALPHA_RANGE, COARSE_STEP)
        assert grid[0] == 0.01
        assert grid[-1] == 0.99
        grid = _param_grid(*PHI_RANGE, COARSE_STEP)
        assert grid[0] == 0.80
        assert grid[-1] == 0.99

    def test_refined_sse_never_worse_than_coarse(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            y = np.abs(10 + np.cumsum(rng.standard_normal(40))) + 1.0
            model = fit(ForecasterSpec("ses"), y)
            fitted_sse, _ = _sse_ses(y, np.array([model.params["alpha"]]))
            coarse = _param_grid(*ALPHA_RANGE, COARSE_STEP)
            coarse_sse, _ = _sse_ses(y, coarse)
            assert fitted_sse[0] <= coarse_sse.min() + 1e-9

    def test_refined_sse_never_worse_than_coarse_trend(self):
        rng = np.random.default_rng(23)
        y = np.abs(5 + np.cumsum(rng.standard_normal(30) * 0.5)) + 1.0
        model = fit(ForecasterSpec("damp"), y)
        fitted_sse, _, _ = _sse_trend(
            y,
            np.array([model.params["alpha"]]),
            np.array([model.params["beta"]]),
            np.array([model.params["phi"]]),
        )
        alphas = _param_grid(*ALPHA_RANGE, COARSE_STEP)
        betas = _param_grid(*BETA_RANGE, COARSE_STEP)
        phis = _param_grid(*PHI_RANGE, COARSE_STEP)
        grids = np.meshgrid(alphas, betas, phis, indexing="ij")
        coarse_sse, _, _ = _sse_trend(y, *(g.ravel() for g in grids))
        assert fitted_sse[0] <= coarse_sse.min() + 1e-9

    def test_params_stay_in_range(self):
        rng = np.random.default_rng(29)
        y = np.abs(8 + np.cumsum(rng.standard_normal(25))) + 1.0
        for kind in ("ses", "holt", "damp"):
            model = fit(ForecasterSpec(kind), y)
            assert ALPHA_RANGE[0] <= model.params["alpha"] <= ALPHA_RANGE[1]
            if kind != "ses":
                assert BETA_RANGE[0] <= model.params["beta"] <= BETA_RANGE[1]
            if kind == "damp":
                assert PHI_RANGE[0] <= model.params["phi"] <= PHI_RANGE[1]


class TestTheta:
    def test_constant_series_forecasts_constant(self):
        model = fit(ForecasterSpec("theta"), np.full(12, 7.0))
        np.testing.assert_allclose(forecast(model, 5).values, 7.0, atol=1e-9)

    def test_line_coefficients(self):
        y = 2.0 + 3.0 * np.arange(10)
        y[0] = 2.0  # exactly on the line; keep positive domain irrelevant here
        model = fit(ForecasterSpec("theta"), y)
        assert model.params["a"] == pytest.approx(2.0)
        assert model.params["b"] == pytest.approx(3.0)

    def test_update_advances_level_against_frozen_line(self):
        rng = np.random.default_rng(31)
        y = np.abs(20 + np.cumsum(rng.standard_normal(24))) + 1.0
        model = fit(ForecasterSpec("theta"), y[:16])
        updated = update_state(model, y[16:])
        a, b, alpha = model.params["a"], model.params["b"], model.params["alpha"]
        level = model.state["level"]
        for t, x in enumerate(y[16:], start=16):
            theta2 = 2.0 * x - (a + b * t)
            level += alpha * (theta2 - level)
        assert updated.state["level"] == pytest.approx(level, abs=1e-9)
        assert updated.position == 24


class TestRandomWalkAndComb:
    def test_rw_repeats_last(self):
        model = fit(ForecasterSpec("rw"), [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
        assert forecast(model, 3).values == (6.0, 6.0, 6.0)
        updated = update_state(model, [2.5])
        assert forecast(updated, 2).values == (2.5, 2.5)

    def test_comb_is_mean_of_components(self):
        rng = np.random.default_rng(37)
        y = np.abs(12 + np.cumsum(rng.standard_normal(30) * 0.8)) + 1.0
        model = fit(ForecasterSpec("comb"), y)
        assert tuple(c.spec.kind for c in model.components) == ("ses", "holt", "damp")
        parts = np.array([
            forecast(c, 6).values for c in model.components
        ])
        np.testing.assert_allclose(
            forecast(model, 6).values, parts.mean(axis=0), atol=1e-12
        )

    def test_comb_components_match_standalone_fits(self):
        rng = np.random.default_rng(41)
        y = np.abs(15 + np.cumsum(rng.standard_normal(28) * 0.5)) + 1.0
        model = fit(ForecasterSpec("comb"), y)
        for component in model.components:
            standalone = fit(ForecasterSpec(component.spec.kind), y)
            assert component.params == standalone.params
            for key, value in component.state.items():
                assert value == pytest.approx(standalone.state[key], abs=1e-12)

    def test_comb_update_advances_components(self):
        rng = np.random.default_rng(43)
        y = np.abs(9 + np.cumsum(rng.standard_normal(26) * 0.4)) + 1.0
        model = fit(ForecasterSpec("comb"), y[:20])
        updated = update_state(model, y[20:])
        for before, after in zip(model.components, updated.components):
            manual = update_state(before, y[20:])
            for key, value in after.state.items():
                assert value == pytest.approx(manual.state[key], abs=1e-12)


class TestRandomForest:
    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(47)
        y = np.abs(10 + np.cumsum(rng.standard_normal(40))) + 1.0
        spec = ForecasterSpec("rf", hyperparameters={"lags": 4, "trees": 10, "seed": 3})
        a = fit(spec, y)
        b = fit(spec, y)
        assert a.trees == b.trees
        assert forecast(a, 5).values == forecast(b, 5).values

    def test_different_seed_different_forest(self):
        rng = np.random.default_rng(53)
        y = np.abs(10 + np.cumsum(rng.standard_normal(40))) + 1.0
        a = fit(ForecasterSpec("rf", hyperparameters={"lags": 4, "trees": 10, "seed": 0}), y)
        b = fit(ForecasterSpec("rf", hyperparameters={"lags": 4, "trees": 10, "seed": 1}), y)
        assert a.trees != b.trees

    def test_constant_series_predicts_constant(self):
        spec = ForecasterSpec("rf", hyperparameters={"lags": 3, "trees": 5})
        model = fit(spec, np.full(12, 4.0))
        np.testing.assert_allclose(forecast(model, 4).values, 4.0, atol=1e-12)

    def test_learns_alternating_pattern(self):
        y = [10.0, 20.0] * 12
        spec = ForecasterSpec("rf", hyperparameters={"lags": 3, "trees": 30, "min_leaf": 1})
        model = fit(spec, y)
        got = forecast(model, 4).values
        # last window ends at 20, so the continuation alternates 10, 20, ...
        assert got[0] < 15.0 < got[1]
        assert got[2] < 15.0 < got[3]

    def test_update_slides_lag_window(self):
        y = np.linspace(5.0, 9.0, 12)
        spec = ForecasterSpec("rf", hyperparameters={"lags": 4, "trees": 2})
        model = fit(spec, y)
        updated = update_state(model, [11.0, 12.0])
        assert updated.state["window"] == (
            pytest.approx(y[-2]), pytest.approx(y[-1]), 11.0, 12.0,
        )

    def test_needs_more_than_lags_observations(self):
        with pytest.raises(DataError, match="lags"):
            fit(ForecasterSpec("rf", hyperparameters={"lags": 20}), np.ones(10) * 2.0)


class TestTreeInternals:
    def test_hand_split(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        tree = _grow_tree(X, y, min_leaf=1)
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 1.5
        assert tree.predict_one(np.array([1.2])) == 0.0
        assert tree.predict_one(np.array([1.6])) == 10.0

    def test_min_leaf_blocks_small_splits(self):
        X = np.arange(4.0).reshape(-1, 1)
        y = np.array([0.0, 0.0, 0.0, 10.0])
        tree = _grow_tree(X, y, min_leaf=2)
        # the only variance-reducing split (3 vs 1) violates min_leaf=2,
        # and the 2-2 split is taken instead
        assert tree.threshold[0] == 1.5

    def test_pure_node_is_leaf(self):
        X = np.arange(6.0).reshape(-1, 1)
        y = np.full(6, 3.0)
        tree = _grow_tree(X, y, min_leaf=1)
        assert tree.feature == [-1]
        assert tree.value == [3.0]

    def test_predictions_are_subset_means(self):
        rng = np.random.default_rng(59)
        X = rng.uniform(0, 1, size=(40, 3))
        y = rng.uniform(0, 1, size=40)
        tree = _grow_tree(X, y, min_leaf=5)
        preds = np.array([tree.predict_one(x) for x in X])
        # leaf means lie inside the target range and fit better than the
        # global mean
        assert preds.min() >= y.min() - 1e-12
        assert preds.max() <= y.max() + 1e-12
        assert np.sum((preds - y) ** 2) <= np.sum((y.mean() - y) ** 2) + 1e-12

    def test_roundtrip_dict(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([1.0, 2.0, 8.0, 9.0])
        tree = _grow_tree(X, y, min_leaf=1)
        clone = type(tree).from_dict(tree.to_dict())
        assert clone == tree


class TestSeasonalForecasting:
    def test_forecast_reapplies_pattern_at_correct_phase(self):
        model = fit(ForecasterSpec("ses", hyperparameters={"m": 4}), seasonal_series())
        assert model.seasonal_adjusted
        got = forecast(model, 6).values
        expected = [10.0 * SEASONAL_PATTERN[(40 + k) % 4] for k in range(6)]
        np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_update_keeps_phase(self):
        model = fit(ForecasterSpec("ses", hyperparameters={"m": 4}), seasonal_series())
        nxt = [10.0 * SEASONAL_PATTERN[(40 + k) % 4] for k in range(2)]
        updated = update_state(model, nxt)
        got = forecast(updated, 2).values
        expected = [10.0 * SEASONAL_PATTERN[(42 + k) % 4] for k in range(2)]
        np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_comb_seasonal_components_fit_deseasonalized(self):
        model = fit(ForecasterSpec("comb", hyperparameters={"m": 4}), seasonal_series())
        assert model.seasonal_adjusted
        for component in model.components:
            assert not component.seasonal_adjusted
        got = forecast(model, 4).values
        expected = [10.0 * SEASONAL_PATTERN[(40 + k) % 4] for k in range(4)]
        np.testing.assert_allclose(got, expected, atol=1e-9)


class TestValidation:
    def test_unknown_kind(self):
        with pytest.raises(UsageError, match="kind"):
            ForecasterSpec("arima")

    def test_model_id_defaults_to_kind(self):
        assert ForecasterSpec("ses").model_id == "ses"
        assert ForecasterSpec("ses", model_id="ses.a").model_id == "ses.a"

    def test_short_training_window(self):
        with pytest.raises(DataError, match="too short"):
            fit(ForecasterSpec("ses"), [1.0] * 7)

    def test_nonfinite_training_values(self):
        with pytest.raises(DataError):
            fit(ForecasterSpec("ses"), [1.0] * 9 + [float("nan")])

    def test_bad_horizon(self):
        model = fit(ForecasterSpec("rw"), [1.0] * 8)
        with pytest.raises(UsageError):
            forecast(model, 0)

    def test_update_rejects_nonpositive(self):
        model = fit(ForecasterSpec("rw"), [1.0] * 8)
        with pytest.raises(DataError):
            update_state(model, [0.0])

    def test_update_empty_is_identity(self):
        model = fit(ForecasterSpec("rw"), [1.0] * 8)
        assert update_state(model, []) is model

    def test_fit_accepts_time_series(self):
        ts = TimeSeriesFactory()
        model = fit(ForecasterSpec("rw"), ts)
        assert forecast(model, 1).values == (8.0,)


def TimeSeriesFactory():
    from forewatch.series import TimeSeries

    return TimeSeries(id="s", values=tuple(float(v) for v in range(1, 9)))


class TestUpdateForecastConsistency:
    """update_state then forecast equals filtering the full series."""

    def test_all_kinds_match_full_filter(self):
        rng = np.random.default_rng(61)
        y = np.abs(30 + np.cumsum(rng.standard_normal(40) * 0.7)) + 1.0
        for kind in ("ses", "holt", "damp", "theta", "rw", "comb"):
            prefix_model = fit(ForecasterSpec(kind), y[:30])
            stepped = update_state(prefix_model, y[30:])
            # same params applied over the full history in one pass
            refit = _refilter_with_params(prefix_model, y)
            np.testing.assert_allclose(
                forecast(stepped, 5).values,
                forecast(refit, 5).values,
                atol=1e-9,
                err_msg=kind,
            )

    def test_incremental_updates_compose(self):
        rng = np.random.default_rng(67)
        y = np.abs(20 + np.cumsum(rng.standard_normal(36) * 0.5)) + 1.0
        for kind in ("ses", "holt", "damp", "theta", "rw", "comb"):
            model = fit(ForecasterSpec(kind), y[:24])
            one_shot = update_state(model, y[24:])
            stepwise = model
            for t in range(24, 36, 4):
                stepwise = update_state(stepwise, y[t : t + 4])
            np.testing.assert_allclose(
                forecast(stepwise, 3).values,
                forecast(one_shot, 3).values,
                atol=1e-12,
                err_msg=kind,
            )


def _refilter_with_params(model, full_series):
    """Rebuild state by running the fitted parameters over the whole series."""
    from dataclasses import replace

    kind = model.spec.kind
    y = np.asarray(full_series, dtype=float)
    if kind == "ses":
        _, level = _sse_ses(y, np.array([model.params["alpha"]]))
        state = {"level": float(level[0])}
    elif kind in ("holt", "damp"):
        _, level, trend = _sse_trend(
            y,
            np.array([model.params["alpha"]]),
            np.array([model.params["beta"]]),
            np.array([model.params.get("phi", 1.0)]),
        )
        state = {"level": float(level[0]), "trend": float(trend[0])}
    elif kind == "theta":
        a, b, alpha = model.params["a"], model.params["b"], model.params["alpha"]
        theta2 = 2.0 * y - (a + b * np.arange(len(y)))
        _, level = _sse_ses(theta2, np.array([alpha]))
        state = {"level": float(level[0])}
    elif kind == "rw":
        state = {"last": float(y[-1])}
    else:  # comb
        components = tuple(
            _refilter_with_params(c, full_series) for c in model.components
        )
        return replace(
            model, components=components, position=len(y)
        )
    return replace(model, state=state, position=len(y))
