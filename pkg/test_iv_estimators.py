"""
도구변수 추정기 테스트

TD1 손 계산: z=1 군 y 평균 2.5, d 평균 0.75; z=0 군 1.5, 0.25 → (2.5-1.5)/(0.75-0.25) = 2.0
"""

import numpy as np
import pytest

from app.dto.estimation import Estimand
from app.dto.simulation import ScmSpec
from app.errors import DataValidationError, NumericalError
from app.models.dataset import Dataset, Role
from app.utils.confounder_estimators import ols_adjust
from app.utils.iv_estimators import iv_linear, post_lasso_iv, split_sample_iv, wald
from app.utils.learners import lasso_lambda_max
from app.utils.random_streams import make_rng
from app.utils.scm_simulator import simulate


@pytest.fixture
def two_instrument_data(valid_iv_spec):
    spec = ScmSpec.model_validate({**valid_iv_spec.model_dump(), "j_instruments": 2, "gamma_z": [1.0, 0.5],
                                   "instrument_law": "standard_gaussian"})
    return simulate(spec, 1500, 13)


def test_wald_td1(td1):
    result = wald(td1)
    assert result.estimate == pytest.approx(2.0, abs=1e-9)
    assert result.estimand == Estimand.LATE
    assert result.metadata["treatment_contrast"] == pytest.approx(0.5)


def test_tsls_td1_matches_wald(td1):
    tsls = iv_linear(td1, "tsls")
    assert tsls.estimate == pytest.approx(2.0, abs=1e-10)
    assert tsls.estimate == pytest.approx(wald(td1).estimate, abs=1e-10)
    assert tsls.metadata["first_stage_f"] == pytest.approx(2.0, abs=1e-9)
    assert tsls.method == "tsls"


def test_tsri_td1_matches_tsls(td1):
    tsri = iv_linear(td1, "tsri")
    assert tsri.estimate == pytest.approx(iv_linear(td1, "tsls").estimate, abs=1e-10)
    assert "control_function_coefficient" in tsri.metadata


def test_tsls_forbids_logistic_first_stage(td1):
    with pytest.raises(DataValidationError, match="forbidden regression"):
        iv_linear(td1, "tsls", first_stage_link="logistic")


def test_irrelevant_instrument():
    ds = Dataset(
        {"z": [0, 0, 1, 1], "d": [0, 1, 0, 1], "y": [1, 2, 3, 4]},
        {Role.OUTCOME: "y", Role.TREATMENT: "d", Role.INSTRUMENT: ["z"]},
    )
    with pytest.raises(NumericalError, match="irrelevant instrument"):
        wald(ds)


def test_collinear_instruments(td1):
    ds = td1.with_columns({"z_copy": td1.column("z")}, {Role.INSTRUMENT: ["z", "z_copy"]})
    with pytest.raises(NumericalError, match="collinear instruments"):
        iv_linear(ds, "tsls")


def test_instruments_must_be_disjoint_from_covariates(two_instrument_data):
    with pytest.raises(DataValidationError, match="disjoint"):
        iv_linear(two_instrument_data, "tsls", covariates=["x1", "z1"], instruments=["z1"])


def test_three_step_recovers_effect(valid_iv_spec):
    ds = simulate(valid_iv_spec, 10000, 17)
    result = iv_linear(ds, "three_step")
    assert result.method == "three-step"
    assert result.metadata["first_stage_link"] == "logistic"
    assert abs(result.estimate - 1.5) < 0.35


def test_post_lasso_zero_penalty_equals_tsls(two_instrument_data):
    post = post_lasso_iv(two_instrument_data, lam=0.0)
    tsls = iv_linear(two_instrument_data, "tsls")
    assert post.estimate == pytest.approx(tsls.estimate, abs=1e-8)
    assert post.metadata["retained_instruments"] == ["z1", "z2"]
    assert post.method == "post-lasso-iv"


def test_post_lasso_drops_irrelevant_instruments(valid_iv_spec):
    spec = ScmSpec.model_validate({**valid_iv_spec.model_dump(), "j_instruments": 4,
                                   "gamma_z": [1.0, 0.0, 0.0, 0.0], "instrument_law": "standard_gaussian"})
    ds = simulate(spec, 2000, 19)
    result = post_lasso_iv(ds, lam=0.05)
    assert result.metadata["retained_instruments"] == ["z1"]
    assert result.metadata["dropped_instruments"] == ["z2", "z3", "z4"]


def test_post_lasso_reports_empty_selection(two_instrument_data):
    with pytest.raises(NumericalError, match="no instruments retained"):
        post_lasso_iv(two_instrument_data, lam=100.0)


def test_post_lasso_sweep_eliminates_weak_instruments(valid_iv_spec):
    spec = ScmSpec.model_validate({**valid_iv_spec.model_dump(), "j_instruments": 4,
                                   "gamma_z": [0.1, 0.08, 0.05, 0.03], "instrument_law": "standard_gaussian"})
    ds = simulate(spec, 1000, 47)
    lam_max = lasso_lambda_max(ds.matrix(ds.covariates + ds.instruments), ds.d)
    retained = []
    for lam in lam_max * np.linspace(0.0, 1.2, 25):
        try:
            retained.append(len(post_lasso_iv(ds, lam=float(lam)).metadata["retained_instruments"]))
        except NumericalError as e:
            assert e.message == "no instruments retained"
            retained.append(0)
    assert retained[0] == 4
    threshold = retained.index(0)
    # 도구변수가 모두 빠진 뒤로는 추정치를 내지 않는다
    assert all(count == 0 for count in retained[threshold:])
    assert threshold < 20


def test_split_sample_iv(valid_iv_spec):
    ds = simulate(valid_iv_spec, 10000, 23)
    both = split_sample_iv(ds, seed=1)
    single = split_sample_iv(ds, seed=1, cross_fit=False)
    assert len(both.metadata["half_estimates"]) == 2
    assert single.estimate == pytest.approx(both.metadata["half_estimates"][0])
    assert abs(both.estimate - 1.5) < 0.35


def test_tsls_beats_ols_under_hidden_confounding(valid_iv_spec):
    # u는 처치와 결과 모두에 양(+)으로 작용하므로 OLS는 위로 치우치고 tsls는 1.5 근처
    ds = simulate(valid_iv_spec, 10000, 29)
    tsls = iv_linear(ds, "tsls")
    ols = ols_adjust(ds)
    assert abs(tsls.estimate - 1.5) < abs(ols.estimate - 1.5)
    assert ols.estimate - 1.5 > 0.2


def test_wald_equals_tsls_on_random_binary_instrument_data():
    rng = make_rng(101)
    for _ in range(100):
        z = (rng.random(60) < 0.5).astype(float)
        z[:2] = [0.0, 1.0]
        d = (rng.random(60) < 0.2 + 0.5 * z).astype(float)
        ds = Dataset({"z": z, "d": d, "y": rng.normal(size=60) + 2.0 * d},
                     {Role.OUTCOME: "y", Role.TREATMENT: "d", Role.INSTRUMENT: ["z"]})
        try:
            reference = wald(ds).estimate
        except NumericalError:
            continue
        assert abs(reference - iv_linear(ds, "tsls").estimate) < 1e-10


def test_adjusting_for_instrument_amplifies_bias(valid_iv_spec):
    ds = simulate(valid_iv_spec, 20000, 43)
    plain = ols_adjust(ds, ["x1", "x2"]).estimate - 1.5
    amplified = ols_adjust(ds, ["x1", "x2", "z1"]).estimate - 1.5
    assert abs(amplified) > abs(plain)
