#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
워크벤치 라이브러리 사용 예시

비관측 교란이 있는 시뮬레이션 데이터에서
교란 보정 추정기와 도구변수 추정기를 비교하고, 진단과 방법 추천까지 실행한다.
"""
from app.dto.advising import AdvisorInput
from app.dto.estimation import LearnerSpec, MethodOptions
from app.dto.scenario import EstimatorInvocation, ScenarioConfig
from app.dto.simulation import ScmSpec
from app.utils.advisor import advise
from app.utils.diagnostics import diagnose
from app.utils.mc_harness import compare_to_theory, run_scenario
from app.utils.method_registry import run_all
from app.utils.report_tables import comparison_text, diagnostics_text, estimate_table, summary_text
from app.utils.scm_simulator import oracle_effects, predicted_biases, simulate


def create_example_spec() -> ScmSpec:
    """공변량 2개, 이진 도구변수 1개, 비관측 교란 U가 처치와 결과 모두에 작용하는 설정"""
    return ScmSpec(
        k_covariates=2,
        j_instruments=1,
        gamma_x=[0.3, -0.2],
        gamma_z=[1.0],
        gamma_u=0.5,
        beta0=1.0,
        beta_d=1.5,
        beta_x=[0.5, 0.5],
        beta_u=0.8,
    )


def demonstrate_single_dataset(spec: ScmSpec):
    """데이터 한 벌에 모든 추정기 실행"""
    ds = simulate(spec, 2000, seed=7)
    oracle = oracle_effects(ds, "z1")
    print("=== 오라클 ===")
    print(f"ATE: {oracle.ate:.3f}, LATE: {oracle.late:.3f}, 순응자 비율: {oracle.complier_fraction:.3f}")

    options = MethodOptions(learner=LearnerSpec(kind="forest", n_trees=50), k_folds=3)
    print("\n=== 추정 결과 ===")
    print(estimate_table(run_all(ds, options, seed=7)))

    print("=== 진단 ===")
    print(diagnostics_text(diagnose(ds)))


def demonstrate_theory(spec: ScmSpec):
    """프로브 표본 기반 편향 예측"""
    theory = predicted_biases(spec, 20000, seed=1)
    print("=== 이론 예측 ===")
    print(f"OLS 편향: {theory.ols_bias:.3f} (공변량 보정: {theory.ols_bias_adjusted:.3f})")
    print(f"2SLS 비일치성: {theory.tsls_inconsistency:.3f}")


def demonstrate_monte_carlo(spec: ScmSpec):
    """작은 몬테카를로 시나리오와 이론 비교"""
    config = ScenarioConfig(
        spec=spec,
        n=500,
        reps=50,
        seed=11,
        estimators=[
            EstimatorInvocation(method="diff"),
            EstimatorInvocation(method="ols"),
            EstimatorInvocation(method="tsls"),
        ],
    )
    summary = run_scenario(config, max_concurrent=4)
    print("\n=== 몬테카를로 ===")
    print(summary_text(summary))
    print(comparison_text(compare_to_theory(summary, spec, config)))


def demonstrate_advisor():
    """방법 선택 흐름도"""
    advice = advise(AdvisorInput(unobserved_confounding="yes", suitable_ivs="yes", late_useful="yes", sample_size="low",
                                 iv_strength_or_proportion="ok"))
    print("=== 방법 추천 ===")
    print(f"추천: {advice.recommendation}")
    for step in advice.path:
        print(f"- {step.question} {step.answer}")


if __name__ == "__main__":
    print("📊 인과효과 추정 워크벤치 - 사용 예시")
    print("=" * 60)

    example_spec = create_example_spec()
    demonstrate_single_dataset(example_spec)
    demonstrate_theory(example_spec)
    demonstrate_monte_carlo(example_spec)
    demonstrate_advisor()

    print("\n" + "=" * 60)
    print("✅ 모든 예시가 성공적으로 실행되었습니다!")
