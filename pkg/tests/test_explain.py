import numpy as np
import pytest

from premex.data import Dataset
from premex.ensemble import BoostConfig, fit_gbm
from premex.errors import DataValidationError, NumericError
from premex.explain import (
    ValueFunctionConfig,
    beeswarm_data,
    center_ice,
    derivative_ice,
    global_importance,
    ice_curves,
    make_grid,
    shap_exact,
    shap_permutation,
    shap_value_function,
)
from premex.rng import stream
from premex.tree import TreeConfig, fit_tree


def linear_model(weights, intercept=0.0):
    weights = np.asarray(weights, dtype=np.float64)

    def predict(X):
        return np.atleast_2d(X) @ weights + intercept

    return predict


@pytest.fixture
def background5():
    rng = np.random.default_rng(31)
    return ValueFunctionConfig(rng.normal(size=(16, 5)))


class TestValueFunction:
    def test_full_subset_returns_model_output(self, background5):
        f = linear_model([1.0, 2.0, 3.0, 4.0, 5.0], 7.0)
        row = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
        value = shap_value_function(f, row, set(range(5)), background5)
        assert value == pytest.approx(f(row[None, :])[0], abs=1e-9)

    def test_empty_subset_returns_background_mean(self, background5):
        f = linear_model([1.0, -1.0, 0.5, 0.0, 2.0])
        row = np.zeros(5)
        value = shap_value_function(f, row, set(), background5)
        assert value == pytest.approx(float(np.mean(f(background5.background))), abs=1e-12)

    def test_single_background_row(self):
        f = linear_model([2.0, 0.0])
        background = ValueFunctionConfig(np.array([[3.0, 1.0]]))
        value = shap_value_function(f, np.array([9.0, 9.0]), set(), background)
        assert value == 6.0

    def test_empty_background_rejected(self):
        with pytest.raises(DataValidationError):
            ValueFunctionConfig(np.empty((0, 3)))


class TestShapExact:
    def test_constant_model_all_zero(self, background5):
        f = lambda X: np.full(np.atleast_2d(X).shape[0], 42.0)
        rows = np.random.default_rng(0).normal(size=(4, 5))
        explanation = shap_exact(f, rows, background5)
        assert np.array_equal(explanation.phi, np.zeros((4, 5)))
        assert explanation.base_value == 42.0

    def test_additive_closed_form(self, background5):
        weights = [1.5, -2.0, 0.0, 0.7, 3.0]
        f = linear_model(weights, intercept=11.0)
        rows = np.random.default_rng(1).normal(size=(6, 5))
        explanation = shap_exact(f, rows, background5)
        expected = np.asarray(weights) * (rows - background5.background.mean(axis=0))
        assert np.max(np.abs(explanation.phi - expected)) < 1e-9

    def test_matches_permutation_oracle_on_trees(self):
        rng = np.random.default_rng(7)
        for trial in range(4):
            p = [4, 5, 6, 6][trial]
            X = rng.normal(size=(60, p))
            y = rng.normal(size=60)
            tree = fit_tree(X, y, TreeConfig(max_depth=3), stream(trial, "t"))
            f = tree.predict_matrix
            background = ValueFunctionConfig(X[:10])
            rows = X[10:13]
            explanation = shap_exact(f, rows, background)
            for i, row in enumerate(rows):
                oracle = shap_permutation(f, row, background)
                assert np.max(np.abs(explanation.phi[i] - oracle)) < 1e-9

    def test_efficiency(self, background5):
        rng = np.random.default_rng(3)
        f = lambda X: np.sin(np.atleast_2d(X)).sum(axis=1) * 3.0
        rows = rng.normal(size=(5, 5))
        explanation = shap_exact(f, rows, background5)
        for i, row in enumerate(rows):
            total = explanation.base_value + explanation.phi[i].sum()
            assert total == pytest.approx(f(row[None, :])[0], abs=1e-6)

    def test_dummy_feature_exactly_zero(self, background5):
        f = lambda X: np.atleast_2d(X)[:, 0] * 2.0  # ignores features 1..4
        rows = np.random.default_rng(2).normal(size=(3, 5))
        explanation = shap_exact(f, rows, background5)
        assert np.array_equal(explanation.phi[:, 1:], np.zeros((3, 4)))

    def test_symmetric_features_get_equal_phi(self):
        f = lambda X: np.atleast_2d(X)[:, 0] + np.atleast_2d(X)[:, 1]
        # background symmetric under swapping the two features
        background = ValueFunctionConfig(np.array([
            [1.0, 1.0, 0.0],
            [2.0, 3.0, 1.0],
            [3.0, 2.0, -1.0],
        ]))
        row = np.array([5.0, 5.0, 9.0])
        explanation = shap_exact(f, row[None, :], background)
        assert explanation.phi[0, 0] == pytest.approx(explanation.phi[0, 1], abs=1e-9)

    def test_feature_count_guard(self):
        f = lambda X: np.atleast_2d(X).sum(axis=1)
        wide = np.zeros((1, 21))
        with pytest.raises(DataValidationError):
            shap_exact(f, wide, ValueFunctionConfig(wide))

    def test_width_mismatch(self, background5):
        f = lambda X: np.atleast_2d(X).sum(axis=1)
        with pytest.raises(DataValidationError):
            shap_exact(f, np.zeros((1, 4)), background5)


class TestGlobalImportance:
    def test_zero_phi(self, background5):
        f = lambda X: np.zeros(np.atleast_2d(X).shape[0])
        explanation = shap_exact(f, np.zeros((2, 5)), background5)
        importance = global_importance(explanation)
        assert np.array_equal(importance.totals, np.zeros(5))
        assert importance.order == [0, 1, 2, 3, 4]  # ties break by index

    def test_absolute_sum(self):
        explanation = shap_exact(
            linear_model([1.0, 0.0]),
            np.array([[0.0, 0.0], [3.0, 0.0]]),
            ValueFunctionConfig(np.array([[1.0, 0.0], [1.0, 0.0]])),
        )
        importance = global_importance(explanation)
        # phi column 0 is [-1, 2]; |.| sums to 3
        assert importance.totals[0] == pytest.approx(3.0, abs=1e-9)
        assert importance.order[0] == 0


class TestBeeswarm:
    def test_single_point_color_convention(self):
        f = linear_model([2.0])
        explanation = shap_exact(f, np.array([[4.0]]), ValueFunctionConfig(np.array([[1.0]])))
        swarm = beeswarm_data(explanation)
        phi, colors = swarm.points[0]
        assert colors[0] == 0.5

    def test_order_matches_importance(self, background5):
        f = linear_model([0.1, 5.0, 0.0, 1.0, -2.0])
        rows = np.random.default_rng(4).normal(size=(8, 5))
        explanation = shap_exact(f, rows, background5)
        importance = global_importance(explanation)
        swarm = beeswarm_data(explanation)
        assert swarm.feature_order == importance.order

    def test_binary_column_two_color_levels(self, background5):
        f = linear_model([1.0, 1.0, 1.0, 1.0, 1.0])
        rows = np.random.default_rng(5).normal(size=(10, 5))
        rows[:, 2] = np.tile([0.0, 1.0], 5)
        explanation = shap_exact(f, rows, background5)
        swarm = beeswarm_data(explanation)
        slot = swarm.feature_order.index(2)
        _, colors = swarm.points[slot]
        assert len(np.unique(colors)) == 2


class TestIceCurves:
    def test_model_ignoring_feature_gives_flat_curves(self):
        f = linear_model([1.0, 0.0])
        rows = np.random.default_rng(6).normal(size=(7, 2))
        curves = ice_curves(f, rows, 1, n_points=15)
        assert np.max(np.ptp(curves.curves, axis=1)) == 0.0
        assert np.max(np.ptp(curves.pdp)) == 0.0

    def test_pdp_is_exact_mean(self):
        f = lambda X: np.atleast_2d(X)[:, 0] ** 2
        rows = np.random.default_rng(7).normal(size=(9, 2))
        curves = ice_curves(f, rows, 0, n_points=12)
        assert np.array_equal(curves.pdp, curves.curves.mean(axis=0))

    def test_additive_model_curves_are_vertical_shifts(self):
        f = lambda X: np.sin(np.atleast_2d(X)[:, 0]) + np.atleast_2d(X)[:, 1] * 2.0
        rows = np.random.default_rng(8).normal(size=(6, 2))
        curves = ice_curves(f, rows, 0, n_points=20)
        shifted = curves.curves - curves.curves[:, :1]
        for i in range(1, 6):
            assert np.max(np.abs(shifted[i] - shifted[0])) < 1e-9

    def test_grid_uses_unique_values_for_low_cardinality(self):
        rows = np.zeros((30, 2))
        rows[:, 0] = np.tile([0.0, 1.0, 2.0], 10)
        grid = make_grid(rows[:, 0])
        assert np.array_equal(grid, [0.0, 1.0, 2.0])

    def test_grid_equispaced_for_continuous(self):
        values = np.linspace(0, 40, 200) ** 1.5
        grid = make_grid(values, n_points=30)
        assert grid.size == 30
        assert grid[0] == values.min()
        assert grid[-1] == values.max()

    def test_invalid_feature(self):
        f = linear_model([1.0, 1.0])
        with pytest.raises(DataValidationError):
            ice_curves(f, np.zeros((3, 2)), 5)


class TestCenteredIce:
    def test_zero_at_anchor(self):
        f = lambda X: np.exp(np.atleast_2d(X)[:, 0])
        rows = np.random.default_rng(9).normal(size=(5, 2))
        centered = center_ice(ice_curves(f, rows, 0, n_points=10))
        assert np.array_equal(centered.curves[:, 0], np.zeros(5))
        assert centered.anchor_index == 0

    def test_constant_curve_centers_to_zero(self):
        f = linear_model([0.0, 1.0])
        rows = np.random.default_rng(10).normal(size=(4, 2))
        centered = center_ice(ice_curves(f, rows, 0, n_points=8))
        assert np.array_equal(centered.curves, np.zeros_like(centered.curves))

    def test_additive_model_centered_curves_coincide(self):
        f = lambda X: np.cos(np.atleast_2d(X)[:, 0]) * 3.0 + np.atleast_2d(X)[:, 1]
        rows = np.random.default_rng(11).normal(size=(8, 2))
        centered = center_ice(ice_curves(f, rows, 0, n_points=25))
        spread = np.ptp(centered.curves, axis=0)
        assert np.max(spread) < 1e-9

    def test_centering_commutes_with_averaging(self):
        f = lambda X: np.atleast_2d(X)[:, 0] * np.atleast_2d(X)[:, 1]
        rows = np.random.default_rng(12).normal(size=(6, 2))
        raw = ice_curves(f, rows, 0, n_points=10)
        centered = center_ice(raw)
        pdp_then_center = raw.pdp - raw.pdp[0]
        assert np.max(np.abs(centered.pdp - pdp_then_center)) < 1e-9

    def test_anchor_bounds(self):
        f = linear_model([1.0, 0.0])
        raw = ice_curves(f, np.zeros((2, 2)), 0, grid=[0.0, 1.0])
        with pytest.raises(DataValidationError):
            center_ice(raw, anchor_index=5)


class TestDerivativeIce:
    def test_linear_model_slope_everywhere(self):
        f = linear_model([4.0, 1.0])
        rows = np.random.default_rng(13).normal(size=(5, 2))
        derivative = derivative_ice(ice_curves(f, rows, 0, n_points=12))
        assert np.max(np.abs(derivative.curves - 4.0)) < 1e-9

    def test_ignored_feature_zero_slope(self):
        f = linear_model([1.0, 0.0])
        rows = np.random.default_rng(14).normal(size=(5, 2))
        derivative = derivative_ice(ice_curves(f, rows, 1, n_points=12))
        assert np.max(np.abs(derivative.curves)) < 1e-12

    def test_no_interaction_single_line(self):
        f = lambda X: np.atleast_2d(X)[:, 0] ** 2 + np.atleast_2d(X)[:, 1]
        rows = np.random.default_rng(15).normal(size=(7, 2))
        derivative = derivative_ice(ice_curves(f, rows, 0, n_points=20))
        assert np.max(np.ptp(derivative.curves, axis=0)) < 1e-9

    def test_interaction_heterogeneous_lines(self):
        f = lambda X: np.atleast_2d(X)[:, 0] * np.atleast_2d(X)[:, 1]
        rows = np.random.default_rng(16).normal(size=(7, 2))
        derivative = derivative_ice(ice_curves(f, rows, 0, n_points=20))
        assert np.max(np.ptp(derivative.curves, axis=0)) > 0.0

    def test_derivative_of_centered_equals_derivative_of_raw(self):
        f = lambda X: np.atleast_2d(X)[:, 0] * np.atleast_2d(X)[:, 1] ** 2
        rows = np.random.default_rng(17).normal(size=(6, 2))
        raw = ice_curves(f, rows, 0, n_points=15)
        from_raw = derivative_ice(raw)
        from_centered = derivative_ice(center_ice(raw))
        assert np.max(np.abs(from_raw.curves - from_centered.curves)) < 1e-9

    def test_small_grid_rejected(self):
        f = linear_model([1.0, 0.0])
        raw = ice_curves(f, np.zeros((2, 2)), 0, grid=[0.0, 1.0])
        with pytest.raises(NumericError):
            derivative_ice(raw)


class TestOnFittedEnsemble:
    def test_shap_and_ice_run_on_boosted_model(self, synth_dataset):
        config = BoostConfig(n_estimators=8, max_depth=3, seed=6)
        model = fit_gbm(synth_dataset, config)
        rows = synth_dataset.X[:5]
        background = ValueFunctionConfig(synth_dataset.X[:40])
        explanation = shap_exact(
            model.predict, rows, background, feature_names=synth_dataset.feature_names
        )
        for i in range(5):
            total = explanation.base_value + explanation.phi[i].sum()
            assert total == pytest.approx(model.predict(rows[i : i + 1])[0], abs=1e-6)
        age = synth_dataset.feature_index("Age")
        curves = ice_curves(model.predict, rows, age, feature_name="Age")
        assert curves.curves.shape[0] == 5
