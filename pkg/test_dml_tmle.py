"""
DML, TMLE, Rubin 결합 테스트
"""

import numpy as np
import pytest

from app.dto.estimation import Estimand, EstimateResult, LearnerSpec
from app.errors import DataValidationError, NumericalError
from app.models.dataset import Dataset, Role
from app.utils.confounder_estimators import ols_adjust, tmle_ate
from app.utils.dml import dml_estimate, orthogonality_probe
from app.utils.iv_estimators import iv_linear
from app.utils.pooling import pool_rubin
from app.utils.scm_simulator import simulate

OLS = LearnerSpec(kind="ols")


@pytest.fixture
def simulated(valid_iv_spec):
    return simulate(valid_iv_spec, 800, 31)


def test_plm_single_fold_equals_frisch_waugh(simulated):
    dml = dml_estimate(simulated, "plm", OLS, k_folds=1, comparison_mode=True)
    assert dml.estimate == pytest.approx(ols_adjust(simulated).estimate, abs=1e-10)
    assert dml.estimand == Estimand.ATE
    assert dml.method == "dml-plm"


def test_pliv_single_fold_equals_tsls(simulated):
    dml = dml_estimate(simulated, "pliv", OLS, k_folds=1, comparison_mode=True)
    assert dml.estimate == pytest.approx(iv_linear(simulated, "tsls").estimate, abs=1e-8)
    assert dml.estimand == Estimand.LATE
    assert dml.metadata["estimand_note"] == "LATE-flavored"


def test_single_fold_requires_comparison_mode(simulated):
    with pytest.raises(DataValidationError, match="comparison mode"):
        dml_estimate(simulated, "plm", OLS, k_folds=1)


def test_cross_fitted_plm_reports_fold_estimates(simulated):
    result = dml_estimate(simulated, "plm", OLS, k_folds=4, seed=5)
    assert len(result.metadata["fold_estimates"]) == 4
    assert result.std_err > 0
    again = dml_estimate(simulated, "plm", OLS, k_folds=4, seed=5)
    assert again.estimate == result.estimate


def test_forest_learner_runs(simulated):
    forest = LearnerSpec(kind="forest", n_trees=10, max_depth=3)
    result = dml_estimate(simulated, "plm", forest, k_folds=2, seed=1)
    assert result.metadata["learner"]["n_trees"] == 10
    assert np.isfinite(result.estimate)


def test_pliv_requires_instrument(simulated):
    ds = Dataset({name: simulated.column(name) for name in ("x1", "x2", "d", "y")},
                 {Role.OUTCOME: "y", Role.TREATMENT: "d", Role.COVARIATE: ["x1", "x2"]})
    with pytest.raises(DataValidationError, match="at least one instrument"):
        dml_estimate(ds, "pliv", OLS, k_folds=2)


def test_weak_residual_identification():
    x = np.arange(10, dtype=float)
    ds = Dataset({"x": x, "d": 0.5 * x, "y": x ** 2},
                 {Role.OUTCOME: "y", Role.TREATMENT: "d", Role.COVARIATE: ["x"]}, binary_treatment=False)
    with pytest.raises(NumericalError, match="weak residual identification"):
        dml_estimate(ds, "plm", OLS, k_folds=1, comparison_mode=True)


def test_orthogonality_separates_moments_in_comparison_mode(simulated):
    check = orthogonality_probe(simulated, OLS, k_folds=1, comparison_mode=True)
    assert check.passes
    assert abs(check.naive_linear) > abs(check.linear)
    assert check.deltas[0] == 0.0
    assert check.moment_values[0] == pytest.approx(0.0, abs=1e-10)


@pytest.fixture
def covariate_driven(valid_iv_spec):
    spec = valid_iv_spec.model_copy(update={"gamma_x": [0.8, 0.4]})
    return simulate(spec, 8000, 5)


def test_cross_fitted_orthogonal_score_passes_and_naive_fails(covariate_driven):
    check = orthogonality_probe(covariate_driven, OLS, k_folds=5, seed=3)
    assert check.passes
    assert not check.naive_passes
    assert abs(check.naive_linear) > 20 * abs(check.linear)


def test_forest_nuisances_keep_orthogonal_score_less_sensitive(covariate_driven):
    forest = LearnerSpec(kind="forest", n_trees=30, max_depth=5, min_leaf=20)
    check = orthogonality_probe(covariate_driven, forest, k_folds=5, seed=3)
    assert not check.naive_passes
    assert abs(check.linear) < 0.5 * abs(check.naive_linear)


def test_larger_perturbation_scale_loosens_the_criterion(covariate_driven):
    unit = orthogonality_probe(covariate_driven, OLS, k_folds=5, seed=3)
    wide = orthogonality_probe(covariate_driven, OLS, k_folds=5, seed=3, scale=25.0)
    assert wide.quadratic == pytest.approx(625 * unit.quadratic, rel=1e-6)
    assert wide.naive_linear == pytest.approx(25 * unit.naive_linear, rel=1e-6)


def test_perturbation_scale_must_be_positive(covariate_driven):
    with pytest.raises(DataValidationError, match="scale must be positive"):
        orthogonality_probe(covariate_driven, OLS, k_folds=5, scale=0.0)


def test_tmle_td2_saturated(td2):
    result = tmle_ate(td2, k_folds=1)
    assert result.estimate == pytest.approx(1.0, abs=1e-8)
    assert abs(result.metadata["epsilon"]) < 1e-8
    assert result.metadata["propensity_bounds"] == [0.01, 0.99]


def test_tmle_constant_outcome(td2):
    ds = td2.with_columns({"y": np.full(8, 3.0)})
    result = tmle_ate(ds)
    assert result.estimate == 0.0
    assert result.std_err == 0.0
    assert result.metadata["constant_outcome"] is True


def test_tmle_recovers_effect_with_cross_fitting(valid_iv_spec):
    spec = valid_iv_spec.model_copy(update={"gamma_u": 0.0})
    ds = simulate(spec, 3000, 37)
    result = tmle_ate(ds, k_folds=3, seed=2)
    assert abs(result.estimate - 1.5) < 0.25
    assert result.ci_low <= result.estimate <= result.ci_high


def test_rubin_pooling_by_hand():
    results = [EstimateResult.normal(Estimand.ATE, value, 1.0, 100, "ols") for value in (1.0, 3.0)]
    pooled = pool_rubin(results)
    assert pooled.estimate == pytest.approx(2.0)
    assert pooled.metadata["total_variance"] == pytest.approx(4.0)
    assert pooled.std_err == pytest.approx(2.0)
    assert pooled.metadata["m"] == 2


def test_pooling_needs_two_results():
    with pytest.raises(DataValidationError, match="need ≥ 2 results"):
        pool_rubin([EstimateResult.normal(Estimand.ATE, 1.0, 1.0, 10, "ols")])


def test_pooling_rejects_mixed_estimands():
    results = [
        EstimateResult.normal(Estimand.ATE, 1.0, 1.0, 10, "ols"),
        EstimateResult.normal(Estimand.LATE, 1.0, 1.0, 10, "tsls"),
    ]
    with pytest.raises(DataValidationError, match="heterogeneous estimands"):
        pool_rubin(results)


def test_rubin_pooling_identical_estimates_has_no_between_variance():
    results = [EstimateResult.normal(Estimand.ATE, 2.0, 0.5, 50, "aiptw") for _ in range(3)]
    pooled = pool_rubin(results)
    assert pooled.estimate == pytest.approx(2.0, abs=1e-12)
    assert pooled.std_err == pytest.approx(0.5, abs=1e-12)
    assert pooled.metadata["between_variance"] == 0.0
    assert pooled.metadata["degrees_of_freedom"] is None
