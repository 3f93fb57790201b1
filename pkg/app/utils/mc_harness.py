"""
몬테카를로 시나리오 하네스

반복 r은 (config.seed, r)에서 파생된 시드로 데이터를 생성하고 모든 추정기를 실행한다.
반복들은 세마포어로 동시 실행 수를 제한해 스레드에서 돌리며, 집계는 항상 반복 순서대로
수행하므로 동시 실행 수와 무관하게 결과가 비트 단위로 같다.
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..config import settings
from ..dto.estimation import Z_95, EstimateResult
from ..dto.scenario import (EstimatorSummary, McSummary, OracleMeans, ScenarioConfig, TheoryComparison,
                            TheoryComparisonRow)
from ..dto.simulation import OracleReport, ScmSpec
from ..errors import DataValidationError, WorkbenchError
from .method_registry import IV_METHODS, run_method
from .random_streams import derive_seed
from .scm_simulator import oracle_effects, predicted_biases, simulate

logger = logging.getLogger(__name__)

# 이론 비교 허용 범위 (MC 표준오차 배수)
THEORY_TOLERANCE = 3.0

DEFAULT_GAMMA_Z_SCALES = (1.0, 0.3, 0.1)


@dataclass(frozen=True)
class ReplicateOutcome:
    """반복 하나의 오라클과 추정기별 결과 (실패 시 오류 메시지)"""
    oracle: Optional[OracleReport]
    entries: List[Union[EstimateResult, str]]


def run_replicate(config: ScenarioConfig, index: int) -> ReplicateOutcome:
    """반복 index 실행 (순수 함수: 같은 설정과 index면 같은 결과)"""
    seed = derive_seed(config.seed, index)
    ds = simulate(config.spec, config.n, seed)
    oracle = oracle_effects(ds, config.instrument)
    entries: List[Union[EstimateResult, str]] = []
    for position, invocation in enumerate(config.estimators):
        try:
            entries.append(run_method(ds, invocation.method, invocation.options, derive_seed(seed, position)))
        except (WorkbenchError, np.linalg.LinAlgError) as e:
            message = e.message if isinstance(e, WorkbenchError) else f"linear algebra failure: {e}"
            logger.debug(f"반복 {index} 추정기 {invocation.name} 실패: {message}")
            entries.append(message)
    return ReplicateOutcome(oracle=oracle, entries=entries)


def _target_value(oracle: Optional[OracleReport], target: str) -> Optional[float]:
    if oracle is None:
        return None
    return oracle.ate if target == "ate" else oracle.late


def _summarize_estimator(config: ScenarioConfig, position: int, outcomes: List[ReplicateOutcome]) -> EstimatorSummary:
    invocation = config.estimators[position]
    estimates, std_errs, targets, lows, highs = [], [], [], [], []
    messages: List[str] = []
    estimand = None
    n_errors = 0
    for outcome in outcomes:
        entry = outcome.entries[position]
        target = _target_value(outcome.oracle, config.target)
        if isinstance(entry, str) or target is None:
            n_errors += 1
            message = entry if isinstance(entry, str) else f"oracle {config.target} unavailable"
            if message not in messages:
                messages.append(message)
            continue
        estimand = entry.estimand.value
        estimates.append(entry.estimate)
        std_errs.append(entry.std_err)
        targets.append(target)
        lows.append(entry.ci_low)
        highs.append(entry.ci_high)

    summary = EstimatorSummary(label=invocation.name, method=invocation.method, estimand=estimand,
                               n_success=len(estimates), n_errors=n_errors, error_messages=messages)
    if not estimates:
        return summary

    estimates_arr = np.asarray(estimates)
    std_errs_arr = np.asarray(std_errs)
    targets_arr = np.asarray(targets)
    errors = estimates_arr - targets_arr
    empirical_sd = float(np.std(errors))
    with np.errstate(divide="ignore", invalid="ignore"):
        rejected = np.where(std_errs_arr > 0, np.abs(estimates_arr / std_errs_arr) > Z_95, estimates_arr != 0.0)
    covered = (np.asarray(lows) <= targets_arr) & (targets_arr <= np.asarray(highs))
    return summary.model_copy(update={
        "mean_estimate": float(np.mean(estimates_arr)),
        "median_estimate": float(np.median(estimates_arr)),
        "mean_target": float(np.mean(targets_arr)),
        "mean_bias": float(np.mean(errors)),
        "empirical_sd": empirical_sd,
        "mcse_bias": empirical_sd / float(np.sqrt(len(errors))),
        "mean_std_err": float(np.mean(std_errs_arr)),
        "rmse": float(np.sqrt(np.mean(errors ** 2))),
        "coverage": float(np.mean(covered)),
        "rejection_rate": float(np.mean(rejected)),
    })


def _oracle_means(outcomes: List[ReplicateOutcome], target: str) -> OracleMeans:
    oracles = [outcome.oracle for outcome in outcomes if outcome.oracle is not None]

    def mean_of(values) -> Optional[float]:
        present = [value for value in values if value is not None]
        return float(np.mean(present)) if present else None

    return OracleMeans(
        ate=mean_of(oracle.ate for oracle in oracles),
        att=mean_of(oracle.att for oracle in oracles),
        late=mean_of(oracle.late for oracle in oracles),
        complier_fraction=mean_of(oracle.complier_fraction for oracle in oracles),
        reps_without_target=sum(1 for outcome in outcomes if _target_value(outcome.oracle, target) is None),
    )


def _summarize(config: ScenarioConfig, outcomes: List[ReplicateOutcome]) -> McSummary:
    rows = [_summarize_estimator(config, position, outcomes) for position in range(len(config.estimators))]
    try:
        theory = predicted_biases(config.spec, config.n_probe or settings.probe_n, config.seed)
    except WorkbenchError as e:
        logger.warning(f"이론 예측 계산 실패: {e.message}")
        theory = None
    return McSummary(
        spec_fingerprint=config.spec.fingerprint(),
        n=config.n,
        reps=config.reps,
        seed=config.seed,
        target=config.target,
        rows=rows,
        oracle=_oracle_means(outcomes, config.target),
        theory=theory,
    )


async def run_scenario_async(config: ScenarioConfig, max_concurrent: Optional[int] = None) -> McSummary:
    """
    시나리오 실행 (비동기)

    Args:
        config: 시나리오 설정
        max_concurrent: 동시 실행 반복 수 (기본: WORKBENCH_MAX_CONCURRENT)

    Returns:
        McSummary (반복 순서대로 집계)
    """
    limit = max_concurrent or settings.max_concurrent
    if limit < 1:
        raise DataValidationError("run_scenario", "max_concurrent must be at least 1", {"max_concurrent": limit})
    semaphore = asyncio.Semaphore(limit)
    logger.info(f"시나리오 시작: n={config.n}, reps={config.reps}, 추정기 {len(config.estimators)}개, 동시 {limit}")

    async def run_single(index: int) -> ReplicateOutcome:
        async with semaphore:
            return await asyncio.to_thread(run_replicate, config, index)

    results = await asyncio.gather(*[run_single(index) for index in range(config.reps)], return_exceptions=True)

    outcomes: List[ReplicateOutcome] = []
    failed = 0
    for index, result in enumerate(results):
        if isinstance(result, Exception):
            failed += 1
            logger.error(f"반복 {index} 실패: {str(result)}")
            message = result.message if isinstance(result, WorkbenchError) else f"replicate failed: {result}"
            outcomes.append(ReplicateOutcome(oracle=None, entries=[message] * len(config.estimators)))
        else:
            outcomes.append(result)

    summary = _summarize(config, outcomes)
    errors = sum(row.n_errors for row in summary.rows)
    logger.info(f"시나리오 완료: 반복 실패 {failed}건, 추정기 오류 {errors}건")
    return summary


def run_scenario(config: ScenarioConfig, max_concurrent: Optional[int] = None) -> McSummary:
    """시나리오 실행 (동기 진입점)"""
    return asyncio.run(run_scenario_async(config, max_concurrent))


def _theory_quantity(method: str, covariates: Optional[Sequence[str]], spec: ScmSpec) -> Optional[str]:
    if method in IV_METHODS:
        return "tsls_inconsistency"
    if method == "diff":
        return "ols_bias"
    if method in ("ols", "dml-plm"):
        adjusted = spec.k_covariates > 0 and (covariates is None or len(covariates) > 0)
        return "ols_bias_adjusted" if adjusted else "ols_bias"
    return None


def compare_to_theory(summary: McSummary, spec: ScmSpec, config: Optional[ScenarioConfig] = None) -> TheoryComparison:
    """
    경험적 평균 편향과 프로브 표본 이론 예측 비교

    z = (평균 편향 - 예측) / MC 표준오차, |z| < 3이면 허용 범위 내.
    config가 있으면 추정기별 공변량 옵션으로 보정/비보정 OLS 예측을 고른다.
    """
    fingerprint = spec.fingerprint()
    if fingerprint != summary.spec_fingerprint:
        raise DataValidationError("compare_to_theory", "spec fingerprint mismatch: summary was produced from another spec",
                                  {"summary": summary.spec_fingerprint, "spec": fingerprint})
    theory = summary.theory or predicted_biases(spec, settings.probe_n, summary.seed)
    options = {invocation.name: invocation.options for invocation in config.estimators} if config else {}

    rows = []
    for row in summary.rows:
        covariates = options[row.label].covariates if row.label in options else None
        quantity = _theory_quantity(row.method, covariates, spec)
        predicted = getattr(theory, quantity) if quantity else None
        comparison = TheoryComparisonRow(label=row.label, method=row.method, quantity=quantity,
                                         empirical_bias=row.mean_bias, predicted_bias=predicted, mcse=row.mcse_bias)
        if predicted is not None and row.mean_bias is not None and row.mcse_bias is not None:
            gap = row.mean_bias - predicted
            if row.mcse_bias > 0:
                z = gap / row.mcse_bias
            else:
                z = 0.0 if gap == 0 else float(np.sign(gap) * np.inf)
            comparison = comparison.model_copy(update={"z": z, "within_tolerance": bool(abs(z) < THEORY_TOLERANCE)})
        rows.append(comparison)
    return TheoryComparison(spec_fingerprint=fingerprint, rows=rows)


def run_gamma_z_grid(config: ScenarioConfig, scales: Sequence[float] = DEFAULT_GAMMA_Z_SCALES,
                     max_concurrent: Optional[int] = None) -> List[McSummary]:
    """1단계 도구변수 계수를 scale배 한 시나리오들을 순서대로 실행"""
    summaries = []
    for scale in scales:
        spec = config.spec.model_copy(update={"gamma_z": [value * scale for value in config.spec.gamma_z]})
        scaled = config.model_copy(update={"spec": spec})
        logger.info(f"도구변수 강도 {scale}배 시나리오 실행")
        summaries.append(run_scenario(scaled, max_concurrent))
    return summaries


SUMMARY_COLUMNS = [
    "label", "method", "estimand", "n_success", "n_errors", "mean_estimate", "median_estimate", "mean_target",
    "mean_bias", "empirical_sd", "mcse_bias", "mean_std_err", "rmse", "coverage", "rejection_rate",
]


def summary_to_csv(summary: McSummary) -> str:
    """추정기당 한 행 CSV"""
    frame = pd.DataFrame([row.model_dump() for row in summary.rows], columns=SUMMARY_COLUMNS + ["error_messages"])
    frame["error_messages"] = frame["error_messages"].map(lambda messages: "; ".join(messages))
    frame.insert(0, "spec_fingerprint", summary.spec_fingerprint)
    return frame.to_csv(index=False, lineterminator="\n")
