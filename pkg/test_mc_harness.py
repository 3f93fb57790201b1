"""
몬테카를로 하네스 테스트
"""

import io
import json

import pandas as pd
import pytest

from app.dto.scenario import ScenarioConfig
from app.errors import DataValidationError
from app.utils.mc_harness import (SUMMARY_COLUMNS, compare_to_theory, run_gamma_z_grid, run_replicate,
                                  run_scenario, summary_to_csv)


@pytest.fixture
def scenario(mock_data) -> ScenarioConfig:
    payload = json.loads((mock_data / "scenario_valid_iv.json").read_text(encoding="utf-8"))
    payload.update({"reps": 6, "n": 200, "n_probe": 1000})
    return ScenarioConfig.model_validate(payload)


def test_summary_independent_of_concurrency(scenario):
    sequential = run_scenario(scenario, max_concurrent=1)
    parallel = run_scenario(scenario, max_concurrent=4)
    assert sequential.model_dump() == parallel.model_dump()


def test_single_replicate_summary(scenario):
    config = scenario.model_copy(update={"reps": 1})
    summary = run_scenario(config, max_concurrent=1)
    outcome = run_replicate(config, 0)
    for row, entry in zip(summary.rows, outcome.entries):
        assert row.n_success == 1
        assert row.mean_estimate == entry.estimate
        assert row.empirical_sd == 0.0
        assert row.mean_bias == pytest.approx(entry.estimate - outcome.oracle.ate)


def test_rows_follow_estimator_labels(scenario):
    summary = run_scenario(scenario, max_concurrent=2)
    assert [row.label for row in summary.rows] == ["diff", "ols", "tsls_with_x"]
    assert summary.spec_fingerprint == scenario.spec.fingerprint()
    assert summary.oracle.ate == pytest.approx(1.5)
    assert summary.theory is not None


def test_failing_estimator_is_counted_not_raised(scenario):
    payload = scenario.model_dump()
    payload["estimators"] = [{"method": "diff"}, {"method": "tsls", "options": {"instruments": ["missing"]}}]
    summary = run_scenario(ScenarioConfig.model_validate(payload), max_concurrent=2)
    failed = summary.rows[1]
    assert failed.n_success == 0
    assert failed.n_errors == 6
    assert failed.error_messages == ["missing column: missing"]
    assert failed.mean_bias is None
    assert summary.rows[0].n_success == 6


def test_invalid_concurrency(scenario):
    with pytest.raises(DataValidationError, match="max_concurrent"):
        run_scenario(scenario, max_concurrent=-1)


def test_hidden_confounding_scenario_biases_ols(mock_data):
    payload = json.loads((mock_data / "scenario_valid_iv.json").read_text(encoding="utf-8"))
    payload.update({"reps": 30, "n": 1000, "n_probe": 20000})
    summary = run_scenario(ScenarioConfig.model_validate(payload), max_concurrent=4)
    rows = {row.label: row for row in summary.rows}
    assert rows["ols"].mean_bias > 0.1
    assert abs(rows["tsls_with_x"].mean_bias) < abs(rows["ols"].mean_bias)
    assert 0.0 <= rows["tsls_with_x"].coverage <= 1.0


def test_theory_quantities_per_method(scenario):
    payload = scenario.model_dump()
    payload["estimators"] = [
        {"method": "diff"},
        {"method": "ols"},
        {"method": "ols", "label": "ols_unadjusted", "options": {"covariates": []}},
        {"method": "tsls"},
        {"method": "aiptw"},
    ]
    config = ScenarioConfig.model_validate(payload)
    comparison = compare_to_theory(run_scenario(config, max_concurrent=2), config.spec, config)
    quantities = {row.label: row.quantity for row in comparison.rows}
    assert quantities == {
        "diff": "ols_bias",
        "ols": "ols_bias_adjusted",
        "ols_unadjusted": "ols_bias",
        "tsls": "tsls_inconsistency",
        "aiptw": None,
    }
    for row in comparison.rows:
        if row.quantity is not None:
            assert row.z is not None
            assert row.within_tolerance == (abs(row.z) < 3.0)


def test_theory_comparison_rejects_other_spec(scenario):
    summary = run_scenario(scenario, max_concurrent=2)
    other = scenario.spec.model_copy(update={"beta_d": 0.0})
    with pytest.raises(DataValidationError, match="spec fingerprint mismatch"):
        compare_to_theory(summary, other)


def test_gamma_z_grid_scales_first_stage(scenario):
    summaries = run_gamma_z_grid(scenario, scales=(1.0, 0.5), max_concurrent=2)
    assert len(summaries) == 2
    assert summaries[0].spec_fingerprint == scenario.spec.fingerprint()
    assert summaries[1].spec_fingerprint != summaries[0].spec_fingerprint


def test_summary_csv_has_one_row_per_estimator(scenario):
    summary = run_scenario(scenario, max_concurrent=2)
    frame = pd.read_csv(io.StringIO(summary_to_csv(summary)), dtype={"spec_fingerprint": str})
    assert list(frame.columns) == ["spec_fingerprint"] + SUMMARY_COLUMNS + ["error_messages"]
    assert list(frame["label"]) == ["diff", "ols", "tsls_with_x"]
    assert (frame["spec_fingerprint"] == summary.spec_fingerprint).all()


def _scenario(spec: dict, n: int, reps: int, estimators: list, **extra) -> ScenarioConfig:
    return ScenarioConfig.model_validate({"spec": spec, "n": n, "reps": reps, "seed": 2024,
                                          "estimators": estimators, **extra})


def test_ols_bias_matches_omitted_confounder_prediction():
    config = _scenario({"gamma_u": 1.0, "beta_u": 0.8, "epsilon_sd": 2.0}, n=2000, reps=200,
                       estimators=[{"method": "diff"}, {"method": "ols"}], n_probe=1_000_000)
    summary = run_scenario(config, max_concurrent=4)
    comparison = compare_to_theory(summary, config.spec, config)
    # Cov(D, U) = φ(0)/√2 ≈ 0.282, Var(D) = 0.25
    assert summary.theory.ols_bias == pytest.approx(0.8 * 0.282 / 0.25, abs=0.02)
    for row in comparison.rows:
        assert row.quantity == "ols_bias"
        assert row.within_tolerance, row


def test_tsls_inconsistency_from_direct_effect_matches_prediction():
    spec = {"j_instruments": 1, "gamma0": -0.5, "gamma_z": [1.0], "gamma_u": 0.5, "beta_d": 1.5, "beta_u": 0.8}
    invalid = _scenario({**spec, "delta_z_to_y": [0.2]}, n=5000, reps=200, estimators=[{"method": "tsls"}],
                        n_probe=1_000_000)
    summary = run_scenario(invalid, max_concurrent=4)
    row = compare_to_theory(summary, invalid.spec, invalid).rows[0]
    # δ·Var(Z)/Cov(Z, D) = 0.2 / (Φ(0.5/√1.25) - Φ(-0.5/√1.25)) ≈ 0.58
    assert row.predicted_bias == pytest.approx(0.58, abs=0.02)
    assert row.within_tolerance, row

    valid = _scenario(spec, n=5000, reps=200, estimators=[{"method": "tsls"}])
    summary = run_scenario(valid, max_concurrent=4)
    assert summary.theory.tsls_inconsistency == 0.0
    assert abs(summary.rows[0].mean_bias) < 0.03


def test_weaker_instruments_pull_tsls_toward_ols():
    config = _scenario({"j_instruments": 6, "gamma_z": [1.0] * 6, "gamma_u": 1.0, "beta_u": 1.0, "epsilon_sd": 0.5,
                        "instrument_law": "standard_gaussian"},
                       n=150, reps=1000, estimators=[{"method": "tsls"}, {"method": "ols"}])
    summaries = run_gamma_z_grid(config, max_concurrent=4)
    shares, spreads = [], []
    for summary in summaries:
        rows = {row.label: row for row in summary.rows}
        tsls, ols = rows["tsls"], rows["ols"]
        assert tsls.n_errors == 0
        # 중앙값 편향이 같은 설정의 OLS 편향에서 차지하는 비율
        shares.append((tsls.median_estimate - tsls.mean_target) / ols.mean_bias)
        spreads.append(tsls.empirical_sd)
    assert shares[0] < shares[1] < shares[2]
    assert spreads[0] < spreads[1] < spreads[2]


def test_wald_targets_complier_effect():
    # W = U + ν ~ N(0, 2), 순응자는 -1.8124 < W ≤ 0: 비율 Φ(0) - Φ(-1.2816) = 0.4, E[U | 순응자] ≈ -0.40
    config = _scenario({"j_instruments": 1, "gamma_z": [1.8124], "gamma_u": 1.0, "beta_u": 0.8,
                        "hetero": {"scale": 1.0, "u_weight": 1.0}},
                       n=2000, reps=200, estimators=[{"method": "wald"}], target="late", instrument="z1")
    summary = run_scenario(config, max_concurrent=4)
    row = summary.rows[0]
    assert summary.oracle.complier_fraction == pytest.approx(0.4, abs=0.01)
    assert summary.oracle.late < summary.oracle.ate - 0.3
    assert abs(row.mean_bias) < 3.0 * row.mcse_bias
    assert abs(row.mean_estimate - summary.oracle.ate) > 5.0 * row.mcse_bias


def test_true_propensity_iptw_is_unbiased():
    config = _scenario({"k_covariates": 2, "gamma_x": [0.4, -0.3], "beta_x": [1.0, 1.0], "beta_u": 0.5},
                       n=1000, reps=200,
                       estimators=[{"method": "iptw", "options": {"ps_model": {"kind": "column", "column": "propensity"}}}])
    row = run_scenario(config, max_concurrent=4).rows[0]
    assert row.n_errors == 0
    assert abs(row.mean_bias) < 3.0 * row.mcse_bias


def test_near_positivity_inflates_iptw_and_trimming_helps():
    # Φ(1.2·x) < 0.02 인 행이 약 4%
    true_ps = {"kind": "column", "column": "propensity"}
    config = _scenario({"k_covariates": 1, "gamma_x": [1.2], "beta_x": [1.0]}, n=1000, reps=200, estimators=[
        {"method": "iptw", "options": {"ps_model": true_ps}},
        {"method": "iptw", "label": "iptw_trimmed", "options": {"ps_model": true_ps, "trim": [0.05, 0.95]}},
        {"method": "ols"},
    ])
    rows = {row.label: row for row in run_scenario(config, max_concurrent=4).rows}
    assert all(row.n_errors == 0 for row in rows.values())
    assert rows["iptw"].empirical_sd > rows["ols"].empirical_sd
    assert rows["iptw_trimmed"].empirical_sd < rows["iptw"].empirical_sd
    assert rows["iptw_trimmed"].mean_estimate != rows["iptw"].mean_estimate


def test_doubly_robust_estimators_need_one_correct_model():
    # x1만 처치와 결과에 작용하므로 x2만 쓰는 모형은 틀린 모형
    models = {
        "ps": {"right": {"kind": "column", "column": "propensity"}, "wrong": {"kind": "logistic", "features": ["x2"]}},
        "outcome": {"right": {"kind": "ols"}, "wrong": {"kind": "ols", "features": ["x2"]}},
    }
    estimators = [{"method": "iptw", "label": "iptw_wrong_ps", "options": {"ps_model": models["ps"]["wrong"]}}]
    for method in ("aiptw", "tmle"):
        for ps in ("right", "wrong"):
            for outcome in ("right", "wrong"):
                estimators.append({"method": method, "label": f"{method}_{ps}_ps_{outcome}_outcome",
                                   "options": {"ps_model": models["ps"][ps], "outcome_model": models["outcome"][outcome]}})
    config = _scenario({"k_covariates": 2, "gamma_x": [0.5, 0.0], "beta_x": [1.0, 0.0], "beta_u": 0.5},
                       n=1000, reps=200, estimators=estimators)
    rows = {row.label: row for row in run_scenario(config, max_concurrent=4).rows}
    assert all(row.n_errors == 0 for row in rows.values())
    for label, row in rows.items():
        if label.startswith("iptw") or "wrong_ps_wrong" in label:
            assert abs(row.mean_bias) > 5.0 * row.mcse_bias, label
        else:
            assert abs(row.mean_bias) < 3.0 * row.mcse_bias, label


def test_oracle_means_skip_replicates_without_oracle():
    # 연속 도구변수에는 잠재처치 열이 없어 LATE 오라클이 정의되지 않는다
    config = _scenario({"j_instruments": 1, "gamma_z": [1.0], "instrument_law": "standard_gaussian"}, n=100, reps=3,
                       estimators=[{"method": "tsls"}], target="late")
    summary = run_scenario(config, max_concurrent=2)
    assert summary.oracle.ate is not None
    assert summary.oracle.late is None
    assert summary.oracle.reps_without_target == 3
    assert summary.rows[0].n_errors == 3


def test_oracle_means_are_empty_when_every_oracle_fails():
    config = _scenario({"j_instruments": 2, "gamma_z": [1.0, 1.0]}, n=100, reps=3, estimators=[{"method": "wald"}],
                       target="late", instrument="z2")
    summary = run_scenario(config, max_concurrent=2)
    assert summary.oracle.ate is None
    assert summary.oracle.late is None
    assert summary.rows[0].n_errors == 3
    assert summary.rows[0].error_messages == ["potential treatments are defined for instrument z1, not z2"]
