"""
교란 보정 추정기 테스트 (diff, ols, iptw, aiptw)

손 계산 기준값:
- TD1: 처치군 y 평균 3, 대조군 1 → 평균 차이 2.0
- TD2: 처치군 y 평균 1.75, 대조군 0.25 → 1.5; y = d + x 이므로 x 보정 시 1.0
- TD2 성향점수 0.25 (x=0), 0.75 (x=1): 가중 처치군 평균 1.5, 대조군 0.5 → 1.0
"""

import numpy as np
import pytest

from app.dto.estimation import Z_95, Estimand, LearnerSpec
from app.dto.simulation import MediatorSpec, ScmSpec
from app.errors import DataValidationError, NumericalError
from app.models.dataset import Dataset, Role
from app.utils.confounder_estimators import aiptw, diff_in_means, iptw, iptw_weights, ols_adjust
from app.utils.scm_simulator import simulate


def test_diff_in_means_td1(td1):
    result = diff_in_means(td1)
    assert result.estimate == pytest.approx(2.0, abs=1e-9)
    assert result.estimand == Estimand.NAIVE
    assert result.std_err == 0.0


def test_diff_in_means_td2(td2):
    assert diff_in_means(td2).estimate == pytest.approx(1.5, abs=1e-12)


def test_diff_in_means_needs_both_arms():
    ds = Dataset({"y": [1.0, 2.0, 3.0], "d": [1.0, 1.0, 1.0]}, {Role.OUTCOME: "y", Role.TREATMENT: "d"})
    with pytest.raises(DataValidationError, match="empty arm"):
        diff_in_means(ds)


def test_ols_adjust_td2_exact(td2):
    result = ols_adjust(td2)
    assert result.estimate == pytest.approx(1.0, abs=1e-10)
    assert result.metadata["covariates"] == ["x"]


def test_ols_adjust_without_covariates():
    d = np.array([0, 1, 0, 1, 1, 0], dtype=float)
    ds = Dataset({"y": 3.0 * d, "d": d}, {Role.OUTCOME: "y", Role.TREATMENT: "d"})
    assert ols_adjust(ds).estimate == pytest.approx(3.0, abs=1e-12)


def test_ols_adjust_rejects_treatment_as_covariate(td2):
    with pytest.raises(DataValidationError, match="covariate list names the treatment"):
        ols_adjust(td2, ["x", "d"])


def test_interval_half_width(td2):
    result = ols_adjust(td2.with_columns({"y": td2.y + np.array([0.1, -0.2, 0.0, 0.3, -0.1, 0.2, 0.0, 0.1])}))
    assert result.ci_low <= result.estimate <= result.ci_high
    assert result.ci_high - result.estimate == pytest.approx(Z_95 * result.std_err, abs=1e-9)


def test_iptw_td2_saturated_logistic(td2):
    result = iptw(td2)
    assert result.estimate == pytest.approx(1.0, abs=1e-8)
    assert result.metadata["normalization"] == "hajek"


def test_iptw_td2_horvitz_thompson(td2):
    result = iptw(td2, horvitz_thompson=True)
    assert result.estimate == pytest.approx(1.0, abs=1e-8)
    assert result.metadata["normalization"] == "horvitz_thompson"


def test_iptw_stabilized_weights_keep_point_estimate(td2):
    plain = iptw(td2)
    stabilized = iptw(td2, stabilize=True)
    assert stabilized.estimate == pytest.approx(plain.estimate, abs=1e-12)
    assert stabilized.metadata["stabilized"] is True


def test_iptw_uniform_weights_equal_diff_in_means(td2):
    ds = td2.with_columns({"p": np.full(8, 0.5)})
    result = iptw(ds, LearnerSpec(kind="column", column="p"))
    assert result.estimate == pytest.approx(diff_in_means(td2).estimate, abs=1e-12)


def test_iptw_positivity_violation(td2):
    ds = td2.with_columns({"p": np.array([0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5])})
    with pytest.raises(NumericalError, match="positivity violation: 1 rows"):
        iptw(ds, LearnerSpec(kind="column", column="p"))


def test_iptw_trim_counts_truncated_rows(td2):
    ds = td2.with_columns({"p": np.array([0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.995])})
    result = iptw(ds, LearnerSpec(kind="column", column="p"), trim=(0.01, 0.99))
    assert result.metadata["n_truncated"] == 2
    assert result.metadata["trim_bounds"] == [0.01, 0.99]


def test_iptw_att_weights():
    d = np.array([1.0, 0.0, 0.0])
    p = np.array([0.5, 0.5, 0.2])
    weights = iptw_weights(d, p, estimand="ATT")
    np.testing.assert_allclose(weights.weights, [1.0, 1.0, 0.25])


def test_iptw_att_on_td2(td2):
    # ATT 가중치: 처치군 1, 대조군 p/(1-p) → 대조군 가중 평균 (3·(1/3)·0 + 1·3·1) / (1 + 3) = 0.75
    result = iptw(td2, estimand="ATT")
    assert result.estimand == Estimand.ATT
    assert result.estimate == pytest.approx(1.75 - 0.75, abs=1e-8)


def test_iptw_bootstrap_variance_is_reproducible(valid_iv_spec):
    ds = simulate(valid_iv_spec, 300, 8)
    first = iptw(ds, variance="bootstrap", seed=3, bootstrap_reps=30)
    second = iptw(ds, variance="bootstrap", seed=3, bootstrap_reps=30)
    assert first.std_err == second.std_err
    assert first.std_err > 0
    assert first.metadata["bootstrap_reps"] == 30


def test_aiptw_td2_exact(td2):
    result = aiptw(td2)
    assert result.estimate == pytest.approx(1.0, abs=1e-8)
    assert result.std_err == pytest.approx(0.0, abs=1e-7)


def test_aiptw_rejects_non_binary_treatment():
    ds = Dataset({"y": [1.0, 2.0, 3.0], "d": [0.0, 0.5, 1.0], "x": [1.0, 2.0, 4.0]},
                 {Role.OUTCOME: "y", Role.TREATMENT: "d", Role.COVARIATE: ["x"]}, binary_treatment=False)
    with pytest.raises(DataValidationError, match="non-binary treatment"):
        aiptw(ds)


def test_adjustment_removes_observed_confounding(valid_iv_spec):
    # 관측 교란만 있는 설정: 보정 추정기는 1.5 근처, 단순 차이는 위로 치우친다
    spec = valid_iv_spec.model_copy(update={"gamma_u": 0.0, "gamma_x": [1.0, 0.5], "beta_x": [1.0, 1.0]})
    ds = simulate(spec, 4000, 21)
    naive = diff_in_means(ds).estimate
    for result in (ols_adjust(ds), iptw(ds), aiptw(ds)):
        assert abs(result.estimate - 1.5) < 0.2
    assert naive - 1.5 > 0.5


def test_adjusting_for_mediator_recovers_direct_effect():
    spec = ScmSpec(
        j_instruments=1,
        gamma0=0.5,
        gamma_z=[0.2],
        beta_d=0.0,
        beta_u=0.8,
        treatment_mechanism="bernoulli_lpm",
        mediator=MediatorSpec(b1=0.5, b2=0.4, b3=1.0, noise_sd=1.0),
    )
    ds = simulate(spec, 20000, 17)
    assert ols_adjust(ds, []).estimate == pytest.approx(1.2, abs=0.1)
    assert ols_adjust(ds, ["w"]).estimate == pytest.approx(1.0, abs=0.1)
