"""
학습기 테스트 (OLS, LASSO, ridge, 로지스틱, 포레스트, 교차적합)
"""

import numpy as np
import pytest

from app.dto.estimation import LearnerSpec
from app.errors import DataValidationError, NumericalError
from app.utils.forest import ForestParams, fit_forest
from app.utils.learners import (cross_fit, fit_lasso, fit_learner, fit_logistic, fit_ols, fit_ridge,
                                lasso_lambda_max)
from app.utils.random_streams import assign_folds, derive_seed, make_rng


@pytest.fixture
def linear_data():
    rng = make_rng(7)
    x = rng.normal(size=(200, 3))
    y = 1.0 + x @ np.array([0.5, -1.0, 2.0]) + rng.normal(size=200)
    return x, y


def test_ols_exact_line():
    x = np.arange(10, dtype=float)
    fit = fit_ols(x, 2.0 * x)
    assert fit.coefficients[1] == pytest.approx(2.0, abs=1e-12)
    assert np.max(np.abs(fit.residuals)) < 1e-12


def test_ols_rank_deficiency_names_column():
    x = np.arange(10, dtype=float)
    design = np.column_stack([x, 2.0 * x])
    with pytest.raises(NumericalError, match="column 1 is linearly dependent"):
        fit_ols(design, x)


def test_ols_needs_more_rows_than_columns():
    with pytest.raises(DataValidationError):
        fit_ols(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]))


def test_ols_leave_one_out_residuals_follow_hat_matrix(linear_data):
    x, y = linear_data
    full = fit_ols(x, y)
    design = np.column_stack([np.ones(len(y)), x])
    leverage = np.einsum("ij,ij->i", design @ np.linalg.inv(design.T @ design), design)
    for row in range(5):
        keep = np.arange(len(y)) != row
        without = fit_ols(x[keep], y[keep])
        deleted = y[row] - without.predict(x[row:row + 1])[0]
        assert deleted == pytest.approx(full.residuals[row] / (1.0 - leverage[row]), abs=1e-10)


def test_hc0_matches_homoskedastic_when_residuals_have_equal_size():
    # 잔차 ±0.5는 (1, x)와 직교하므로 HC0 = e²(X'X)⁻¹, 동분산 = e²·n/(n-p)·(X'X)⁻¹
    x = np.array([1.0, 2.0, 3.0, 4.0])
    residuals = 0.5 * np.array([1.0, -1.0, -1.0, 1.0])
    fit = fit_ols(x, 2.0 + 0.5 * x + residuals)
    np.testing.assert_allclose(fit.residuals, residuals, atol=1e-12)
    np.testing.assert_allclose(fit.covariance_hc0, fit.covariance * 2.0 / 4.0, atol=1e-12)
    np.testing.assert_allclose(fit.std_errors(robust=True), fit.std_errors(robust=False) * np.sqrt(0.5), atol=1e-12)


def test_lasso_zero_penalty_matches_ols(linear_data):
    x, y = linear_data
    lasso = fit_lasso(x, y, 0.0)
    ols = fit_ols(x, y)
    np.testing.assert_allclose(lasso.coefficients, ols.coefficients, atol=1e-6)


def test_lasso_lambda_max_zeroes_slopes(linear_data):
    x, y = linear_data
    fit = fit_lasso(x, y, lasso_lambda_max(x, y) * 1.0001)
    assert np.all(fit.coefficients[1:] == 0.0)
    assert fit.coefficients[0] == pytest.approx(y.mean())


def test_lasso_single_standardized_column_is_soft_thresholded():
    # x는 평균 0, 분산 1: (1/n)<x, y - ȳ> = (1.5 + 0.5 + 0.5 + 1.5)/4 = 1.0
    x = np.array([-1.0, 1.0, -1.0, 1.0])
    y = np.array([0.0, 2.0, 1.0, 3.0])
    assert lasso_lambda_max(x, y) == pytest.approx(1.0, abs=1e-12)
    fit = fit_lasso(x, y, 0.3)
    assert fit.coefficients[1] == pytest.approx(0.7, abs=1e-12)
    assert fit.coefficients[0] == pytest.approx(1.5, abs=1e-12)
    assert fit_lasso(x, y, 1.2).coefficients[1] == 0.0


def test_ridge_zero_penalty_matches_ols(linear_data):
    x, y = linear_data
    np.testing.assert_allclose(fit_ridge(x, y, 0.0).coefficients, fit_ols(x, y).coefficients, atol=1e-8)


def test_ridge_shrinks_slopes(linear_data):
    x, y = linear_data
    shrunk = fit_ridge(x, y, 10.0).coefficients[1:]
    assert np.linalg.norm(shrunk) < np.linalg.norm(fit_ols(x, y).coefficients[1:])


def test_logistic_recovers_saturated_cell_means():
    x = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=float)
    d = np.array([1, 0, 0, 0, 1, 1, 1, 0], dtype=float)
    p = fit_logistic(x, d).predict(x)
    np.testing.assert_allclose(p, np.where(x == 1, 0.75, 0.25), atol=1e-8)


def test_logistic_detects_perfect_separation():
    x = np.arange(10, dtype=float)
    d = (x > 4).astype(float)
    with pytest.raises(NumericalError, match="separation"):
        fit_logistic(x, d)


@pytest.fixture
def overlapping_labels():
    x = np.arange(10, dtype=float)
    d = np.array([0, 0, 1, 0, 1, 0, 1, 1, 0, 1], dtype=float)
    return x, d


def test_logistic_flipped_labels_negate_coefficients(overlapping_labels):
    x, d = overlapping_labels
    original = fit_logistic(x, d).coefficients
    flipped = fit_logistic(x, 1.0 - d).coefficients
    np.testing.assert_allclose(flipped, -original, atol=1e-7)


def test_logistic_solves_score_equations(overlapping_labels):
    x, d = overlapping_labels
    p = fit_logistic(x, d).predict(x)
    design = np.column_stack([np.ones(len(x)), x])
    np.testing.assert_allclose(design.T @ (d - p), 0.0, atol=1e-6)


def test_logistic_requires_binary_response():
    with pytest.raises(DataValidationError, match="binary"):
        fit_logistic(np.arange(4, dtype=float), np.array([0.0, 0.5, 1.0, 1.0]))


def test_depth_zero_tree_predicts_mean():
    x = np.arange(20, dtype=float).reshape(-1, 1)
    y = x[:, 0] ** 2
    forest = fit_forest(x, y, ForestParams(n_trees=1, max_depth=0, bootstrap=False))
    np.testing.assert_allclose(forest.predict(x), np.full(20, y.mean()))


def test_forest_is_deterministic_per_seed(linear_data):
    x, y = linear_data
    params = ForestParams(n_trees=5, max_depth=3, min_leaf=5, seed=11)
    first = fit_forest(x, y, params).predict(x)
    second = fit_forest(x, y, params).predict(x)
    np.testing.assert_array_equal(first, second)


def test_forest_learns_step_function():
    x = np.linspace(0, 1, 100).reshape(-1, 1)
    y = (x[:, 0] > 0.5).astype(float)
    forest = fit_forest(x, y, ForestParams(n_trees=10, max_depth=2, min_leaf=5, seed=3))
    predictions = forest.predict(np.array([[0.1], [0.9]]))
    assert predictions[0] < 0.2
    assert predictions[1] > 0.8


def test_column_learner_cannot_be_fitted():
    with pytest.raises(DataValidationError, match="cannot be fitted"):
        fit_learner(LearnerSpec(kind="column", column="p"), np.zeros((4, 1)), np.zeros(4))


def test_folds_balanced_and_order_invariant():
    keys = np.arange(103)
    folds = assign_folds(103, 5, seed=4)
    sizes = np.bincount(folds, minlength=5)
    assert sizes.max() - sizes.min() <= 1

    permutation = make_rng(1).permutation(103)
    shuffled = assign_folds(103, 5, seed=4, row_keys=keys[permutation])
    np.testing.assert_array_equal(shuffled, folds[permutation])


def test_cross_fit_predictions_are_out_of_fold(linear_data):
    x, y = linear_data
    result = cross_fit(LearnerSpec(kind="ols"), x, y, k=4, seed=9)
    held_out = result.folds == 0
    model = fit_learner(LearnerSpec(kind="ols"), x[~held_out], y[~held_out], derive_seed(9, 0))
    np.testing.assert_allclose(result.predictions[held_out], model.predict(x[held_out]))


def test_cross_fit_rejects_too_many_folds():
    with pytest.raises(DataValidationError, match="exceeds rows"):
        cross_fit(LearnerSpec(kind="ols"), np.zeros((3, 1)), np.zeros(3), k=4, seed=0)


def test_cross_fit_single_fold_requires_comparison_mode(linear_data):
    x, y = linear_data
    with pytest.raises(DataValidationError, match="at least 2"):
        cross_fit(LearnerSpec(kind="ols"), x, y, k=1, seed=0)
    single = cross_fit(LearnerSpec(kind="ols"), x, y, k=1, seed=0, allow_single=True)
    np.testing.assert_allclose(single.predictions, fit_ols(x, y).fitted)
