"""
가정 점검 진단

- smd_table: 이진 집단 간 표준화 평균 차이
- first_stage_f: 1단계 도구변수 강도 F (기본 / HC0 robust)
- sargan_j: 과대식별 검정 n·R²
- overlap_report: 성향점수 공통 지지 요약
- bias_ratio: 누락 교란에 대한 OLS/2SLS 편향 비교 (부트스트랩 구간 선택)
- events_per_variable: 모수당 사건 수
- diagnose: 위 진단 묶음
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..dto.diagnostics import (BalanceRow, BalanceTable, BiasInterval, BiasRatioReport, DiagnosticsReport,
                               EpvReport, FirstStageFReport, PositivityReport, SarganReport)
from ..dto.estimation import LearnerSpec
from ..errors import DataValidationError, NumericalError, WorkbenchError
from ..models.dataset import Dataset
from .iv_algebra import first_stage_statistic, iv_design, tsls_fit
from .learners import fit_ols
from .dml import orthogonality_probe
from .nuisance import propensity_scores, require_binary_treatment, resolve_covariates, resolve_instruments
from .random_streams import make_rng

logger = logging.getLogger(__name__)

EXTREME_WEIGHT = 10.0
EPV_UNSTABLE = 20
EPV_FLEXIBLE = 200
BIAS_BOOTSTRAP_KEY = 0xB1A5


def _binary_split(ds: Dataset, group: str, step: str) -> Tuple[np.ndarray, np.ndarray]:
    values = ds.column(group)
    if not np.all((values == 0.0) | (values == 1.0)):
        raise DataValidationError(step, f"non-binary group column: {group}", {"group": group})
    ones = values == 1.0
    if ones.all() or not ones.any():
        raise DataValidationError(step, f"group column {group} must have both levels present", {"group": group})
    return ~ones, ones


def smd_table(ds: Dataset, group: str, covariates: Sequence[str]) -> BalanceTable:
    """집단(0/1)별 공변량 평균, 합동 표준편차, SMD"""
    zeros, ones = _binary_split(ds, group, "smd_table")
    rows = []
    for name in covariates:
        values = ds.column(name)
        first, second = values[zeros], values[ones]
        var_0 = float(first.var(ddof=1)) if first.size > 1 else 0.0
        var_1 = float(second.var(ddof=1)) if second.size > 1 else 0.0
        pooled_sd = float(np.sqrt((var_0 + var_1) / 2.0))
        mean_0, mean_1 = float(first.mean()), float(second.mean())
        zero_variance = pooled_sd == 0.0
        smd = 0.0 if zero_variance else abs(mean_1 - mean_0) / pooled_sd
        rows.append(BalanceRow(covariate=name, mean_0=mean_0, mean_1=mean_1, pooled_sd=pooled_sd,
                               smd=smd, zero_variance=zero_variance))
    return BalanceTable(group=group, rows=rows)


def first_stage_f(
    ds: Dataset,
    covariates: Optional[Sequence[str]] = None,
    instruments: Optional[Sequence[str]] = None,
    robust: bool = False,
) -> FirstStageFReport:
    """D ~ (1, X, Z)에서 도구변수 계수 결합 0 검정"""
    cov_names = resolve_covariates(ds, covariates, "first_stage_f")
    iv_names = resolve_instruments(ds, instruments, cov_names, "first_stage_f")
    statistic = first_stage_statistic(ds.d, ds.matrix(cov_names), ds.matrix(iv_names), robust)
    if statistic.infinite:
        logger.warning("1단계 F 발산: 도구변수가 처치를 완전히 설명함")
    return FirstStageFReport(f=statistic.f, df1=statistic.df1, df2=statistic.df2, p=statistic.p,
                             infinite=statistic.infinite, robust=statistic.robust)


def sargan_j(
    ds: Dataset,
    covariates: Optional[Sequence[str]] = None,
    instruments: Optional[Sequence[str]] = None,
) -> SarganReport:
    """
    Sargan 과대식별 검정

    2SLS 잔차를 (1, X, Z)에 회귀한 R²에 n을 곱한다. df = 도구변수 수 - 1 (내생 처치 하나).
    """
    cov_names = resolve_covariates(ds, covariates, "sargan_j")
    iv_names = resolve_instruments(ds, instruments, cov_names, "sargan_j")
    exogenous = ds.matrix(cov_names)
    excluded = ds.matrix(iv_names)
    regressors, instrument_matrix = iv_design(exogenous, ds.d, excluded)
    fit = tsls_fit(ds.y, regressors, instrument_matrix, "sargan_j")

    auxiliary = fit_ols(np.column_stack([exogenous, excluded]), fit.residuals)
    centered = fit.residuals - fit.residuals.mean()
    total = float(centered @ centered)
    r_squared = 0.0 if total == 0.0 else max(0.0, 1.0 - float(auxiliary.residuals @ auxiliary.residuals) / total)
    j_value = ds.n_rows * r_squared
    df = len(iv_names) - 1
    if df == 0:
        return SarganReport(j=j_value, df=0, p=None, flag="not applicable")
    return SarganReport(j=j_value, df=df, p=float(stats.chi2.sf(j_value, df)))


def overlap_report(propensities) -> PositivityReport:
    """성향점수 분포의 극단값 개수"""
    p = np.asarray(propensities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DataValidationError("overlap_report", "propensities must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise DataValidationError("overlap_report", "propensity values must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        largest_weight = np.maximum(1.0 / p, 1.0 / (1.0 - p))
    return PositivityReport(
        n=int(p.size),
        min=float(p.min()),
        max=float(p.max()),
        below_001=int(np.count_nonzero(p < 0.01)),
        below_005=int(np.count_nonzero(p < 0.05)),
        above_095=int(np.count_nonzero(p > 0.95)),
        above_099=int(np.count_nonzero(p > 0.99)),
        extreme_weight_count=int(np.count_nonzero(largest_weight > EXTREME_WEIGHT)),
    )


def _bias_components(omitted: np.ndarray, d: np.ndarray, z: np.ndarray, beta2: float, step: str):
    treated = d == 1.0
    high = z == 1.0
    if treated.all() or not treated.any():
        raise DataValidationError(step, "both treatment arms are required")
    if high.all() or not high.any():
        raise DataValidationError(step, "both instrument levels are required")
    bias_ols = beta2 * (omitted[treated].mean() - omitted[~treated].mean())
    contrast = d[high].mean() - d[~high].mean()
    if abs(contrast) <= 1e-10:
        raise NumericalError(step, "zero first-stage contrast", {"contrast": float(contrast)})
    bias_tsls = beta2 * (omitted[high].mean() - omitted[~high].mean()) / contrast
    ratio = abs(bias_tsls) / abs(bias_ols) if bias_ols != 0.0 else None
    return float(bias_ols), float(bias_tsls), ratio


def _percentile_interval(values: List[float]) -> Optional[BiasInterval]:
    if len(values) < 2:
        return None
    low, high = np.percentile(values, [2.5, 97.5])
    return BiasInterval(low=float(low), high=float(high))


def bias_ratio(
    ds: Dataset,
    omitted: str,
    instrument: str,
    beta2: float,
    bootstrap_reps: int = 0,
    seed: int = 0,
) -> BiasRatioReport:
    """
    누락 교란 X1에 대한 편향 비교

    Args:
        ds: 이진 처치 데이터셋
        omitted: 누락된 교란 열 X1
        instrument: 이진 도구변수 열
        beta2: X1의 결과 계수
        bootstrap_reps: 0보다 크면 행 재표본 백분위 구간을 함께 보고

    Returns:
        BiasRatioReport (비율 > 1이면 "2SLS more sensitive")
    """
    d = require_binary_treatment(ds, "bias_ratio")
    z = ds.column(instrument)
    if not np.all((z == 0.0) | (z == 1.0)):
        raise DataValidationError("bias_ratio", f"instrument {instrument} must be binary (0/1)")
    x = ds.column(omitted)
    bias_ols, bias_tsls, ratio = _bias_components(x, d, z, beta2, "bias_ratio")
    flags = []
    if ratio is not None and ratio > 1.0:
        flags.append("2SLS more sensitive")
    report = BiasRatioReport(bias_ols=bias_ols, bias_tsls=bias_tsls, ratio=ratio, flags=flags)

    if bootstrap_reps > 0:
        ols_draws, tsls_draws, ratio_draws = [], [], []
        failed = 0
        for rep in range(bootstrap_reps):
            rows = make_rng(seed, BIAS_BOOTSTRAP_KEY, rep).integers(0, ds.n_rows, size=ds.n_rows)
            try:
                draw = _bias_components(x[rows], d[rows], z[rows], beta2, "bias_ratio")
            except WorkbenchError:
                failed += 1
                continue
            ols_draws.append(draw[0])
            tsls_draws.append(draw[1])
            if draw[2] is not None:
                ratio_draws.append(draw[2])
        if failed:
            logger.warning(f"편향 비율 부트스트랩 재표본 {failed}/{bootstrap_reps}개 제외")
        report = report.model_copy(update={
            "bootstrap_reps": bootstrap_reps,
            "ratio_interval": _percentile_interval(ratio_draws),
            "bias_ols_interval": _percentile_interval(ols_draws),
            "bias_tsls_interval": _percentile_interval(tsls_draws),
        })
    return report


def events_per_variable(ds: Dataset, n_parameters: int) -> EpvReport:
    """작은 처치군 크기 / 모수 수"""
    if n_parameters < 1:
        raise DataValidationError("events_per_variable", "n_parameters must be at least 1")
    d = require_binary_treatment(ds, "events_per_variable")
    treated = int(np.count_nonzero(d == 1.0))
    events = min(treated, ds.n_rows - treated)
    epv = events / n_parameters
    flags = []
    if epv < EPV_UNSTABLE:
        flags.append("unstable")
    if epv < EPV_FLEXIBLE:
        flags.append("insufficient for flexible learners")
    return EpvReport(events=events, n_parameters=n_parameters, epv=epv, flags=flags)


def diagnose(
    ds: Dataset,
    covariates: Optional[Sequence[str]] = None,
    instruments: Optional[Sequence[str]] = None,
    ps_model: Optional[LearnerSpec] = None,
    omitted: Optional[str] = None,
    beta2: Optional[float] = None,
    bootstrap_reps: int = 0,
    seed: int = 0,
    orthogonality_learner: Optional[LearnerSpec] = None,
    k_folds: Optional[int] = None,
) -> DiagnosticsReport:
    """
    진단 묶음 생성

    각 항목은 독립적으로 계산되며, 계산할 수 없는 항목은 사유를 notes에 남기고 비워 둔다.
    """
    cov_names = resolve_covariates(ds, covariates, "diagnose")
    iv_names = ds.instruments if instruments is None else list(instruments)
    spec = ps_model or LearnerSpec(kind="logistic")
    report = DiagnosticsReport()
    notes: List[str] = []

    def attempt(section: str, compute):
        try:
            return compute()
        except WorkbenchError as e:
            notes.append(f"{section}: {e.message}")
            logger.warning(f"진단 항목 생략 ({section}): {e.message}")
            return None

    if cov_names:
        report.balance_by_treatment = attempt("balance_by_treatment",
                                              lambda: smd_table(ds, ds.treatment_name, cov_names))
        for name in iv_names:
            table = attempt(f"balance_by_instrument[{name}]", lambda name=name: smd_table(ds, name, cov_names))
            if table is not None:
                report.balance_by_instrument.append(table)

    if iv_names:
        report.first_stage = attempt("first_stage", lambda: first_stage_f(ds, cov_names, iv_names))
        report.first_stage_robust = attempt("first_stage_robust",
                                            lambda: first_stage_f(ds, cov_names, iv_names, robust=True))
        report.sargan = attempt("sargan", lambda: sargan_j(ds, cov_names, iv_names))
    else:
        notes.append("instrument diagnostics: no instruments declared")

    report.overlap = attempt("overlap", lambda: overlap_report(propensity_scores(ds, spec, cov_names, seed)))

    if omitted is not None and beta2 is not None and iv_names:
        report.bias_ratio = attempt("bias_ratio",
                                    lambda: bias_ratio(ds, omitted, iv_names[0], beta2, bootstrap_reps, seed))
    elif omitted is not None or beta2 is not None:
        notes.append("bias_ratio: requires omitted column, beta2 and an instrument")

    report.epv = attempt("epv", lambda: events_per_variable(ds, 1 + len(cov_names)))
    if orthogonality_learner is not None:
        report.orthogonality = attempt("orthogonality", lambda: orthogonality_probe(
            ds, orthogonality_learner, k_folds, seed, cov_names))
    report.notes = notes
    logger.info(f"진단 완료: 공변량 {len(cov_names)}개, 도구변수 {len(iv_names)}개, 생략 {len(notes)}건")
    return report
