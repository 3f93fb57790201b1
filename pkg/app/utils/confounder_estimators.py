"""
교란 보정 추정기

- diff_in_means: 보정 없는 처치군/대조군 평균 차이 (Welch 표준오차)
- ols_adjust: Y ~ (1, D, X) 회귀의 D 계수 (HC0 표준오차)
- iptw: 역확률 가중 (Hájek 기본, Horvitz-Thompson 선택)
- aiptw: 결과모형 예측 + 역확률 가중 잔차 보정 (이중강건)
- tmle_ate: 로지스틱 변동(fluctuation) 한 단계로 결과모형을 표적화한 plug-in 추정
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from ..config import settings
from ..dto.estimation import Estimand, EstimateResult, LearnerSpec, WeightVector
from ..errors import DataValidationError, NumericalError, WorkbenchError
from ..models.dataset import Dataset
from .learners import fit_ols, learner_metadata
from .nuisance import (arm_predictions, propensity_scores, require_binary_treatment,
                       resolve_covariates)
from .random_streams import derive_seed, make_rng

logger = logging.getLogger(__name__)

# TMLE 성향점수 절단 구간
TMLE_PROPENSITY_BOUNDS = (0.01, 0.99)

# TMLE 결과 재척도 여유 (Y를 [b, 1-b]로 사상)
TMLE_OUTCOME_MARGIN = 0.0005

# 초기 결과모형 예측 절단 (logit 계산용)
TMLE_Q_FLOOR = 1e-6

BOOTSTRAP_STREAM_KEY = 0xB007


def _arm_masks(d: np.ndarray, step: str) -> Tuple[np.ndarray, np.ndarray]:
    treated = d == 1.0
    control = ~treated
    if not treated.any() or not control.any():
        raise DataValidationError(step, "empty arm: both treated and control rows are required",
                                  {"n_treated": int(treated.sum()), "n_control": int(control.sum())})
    return treated, control


def _group_variance(values: np.ndarray) -> float:
    return float(values.var(ddof=1)) if values.size > 1 else 0.0


def diff_in_means(ds: Dataset) -> EstimateResult:
    """보정 없는 평균 차이 E[Y|D=1] - E[Y|D=0]"""
    d = require_binary_treatment(ds, "diff_in_means")
    y = ds.y
    treated, control = _arm_masks(d, "diff_in_means")
    n1, n0 = int(treated.sum()), int(control.sum())
    estimate = y[treated].mean() - y[control].mean()
    std_err = np.sqrt(_group_variance(y[treated]) / n1 + _group_variance(y[control]) / n0)
    return EstimateResult.normal(
        Estimand.NAIVE, estimate, std_err, ds.n_rows, "diff",
        {"n_treated": n1, "n_control": n0, "std_err_formula": "welch"},
    )


def ols_adjust(ds: Dataset, covariates: Optional[Sequence[str]] = None) -> EstimateResult:
    """
    회귀 보정 추정

    Args:
        ds: 데이터셋
        covariates: 보정 공변량 (None이면 데이터셋 공변량 역할 전체)

    Returns:
        D 계수와 HC0 표준오차 (동분산 표준오차는 metadata)
    """
    names = resolve_covariates(ds, covariates, "ols_adjust")
    design = np.column_stack([ds.d, ds.matrix(names)])
    fit = fit_ols(design, ds.y)
    robust = fit.std_errors(robust=True)
    classic = fit.std_errors(robust=False)
    return EstimateResult.normal(
        Estimand.ATE, fit.coefficients[1], robust[1], ds.n_rows, "ols",
        {"covariates": names, "std_err_homoskedastic": classic[1], "std_err_formula": "HC0"},
    )


def iptw_weights(
    d: np.ndarray,
    propensity: np.ndarray,
    stabilize: bool = False,
    estimand: str = "ATE",
    trim_bounds: Optional[Tuple[float, float]] = None,
) -> WeightVector:
    """
    행별 역확률 가중치

    ATE: 처치군 1/p, 대조군 1/(1-p); 안정화 시 각각 P(D=1), P(D=0)을 곱한다.
    ATT: 처치군 1, 대조군 p/(1-p); 안정화 시 대조군에 P(D=1)/P(D=0)을 곱한다.
    """
    treated = d == 1.0
    if estimand == "ATT":
        weights = np.where(treated, 1.0, propensity / (1.0 - propensity))
        if stabilize:
            share = treated.mean()
            weights = np.where(treated, 1.0, weights * share / (1.0 - share))
    else:
        weights = np.where(treated, 1.0 / propensity, 1.0 / (1.0 - propensity))
        if stabilize:
            share = treated.mean()
            weights = weights * np.where(treated, share, 1.0 - share)
    if not np.all(np.isfinite(weights) & (weights > 0)):
        raise NumericalError("iptw", "weights must be finite and positive")
    return WeightVector(weights=weights.tolist(), stabilized=stabilize, trim_bounds=trim_bounds)


def _checked_propensity(p: np.ndarray, trim: Optional[Tuple[float, float]], step: str) -> Tuple[np.ndarray, int]:
    """절단 적용 또는 양의성 검사 후 (성향점수, 절단된 행 수)"""
    if trim is not None:
        low, high = float(trim[0]), float(trim[1])
        if not 0.0 < low < high < 1.0:
            raise DataValidationError(step, "trim bounds must satisfy 0 < low < high < 1", {"trim": [low, high]})
        truncated = int(np.count_nonzero((p < low) | (p > high)))
        return np.clip(p, low, high), truncated
    outside = int(np.count_nonzero((p <= 0.0) | (p >= 1.0) | ~np.isfinite(p)))
    if outside:
        raise NumericalError(step, f"positivity violation: {outside} rows with fitted propensity 0 or 1",
                             {"rows": outside})
    return p, 0


def _weighted_contrast(y: np.ndarray, d: np.ndarray, p: np.ndarray, estimand: str,
                       horvitz_thompson: bool) -> Tuple[float, float]:
    """가중 대비와 샌드위치 표준오차 (성향점수를 알려진 값으로 취급)"""
    n = len(y)
    treated = d == 1.0
    if estimand == "ATT":
        w1 = treated.astype(np.float64)
        w0 = np.where(treated, 0.0, p / (1.0 - p))
    else:
        w1 = np.where(treated, 1.0 / p, 0.0)
        w0 = np.where(treated, 0.0, 1.0 / (1.0 - p))

    control = ~treated
    if horvitz_thompson and estimand == "ATE":
        mu1 = float(np.sum(w1[treated] * y[treated])) / n
        mu0 = float(np.sum(w0[control] * y[control])) / n
        estimate = mu1 - mu0
        influence = w1 * y - w0 * y - estimate
    else:
        # 군 내부 합으로 계산 (균일 가중치면 단순 평균과 비트 단위로 같다)
        mu1 = float(np.sum(w1[treated] * y[treated]) / np.sum(w1[treated]))
        mu0 = float(np.sum(w0[control] * y[control]) / np.sum(w0[control]))
        estimate = mu1 - mu0
        influence = w1 * (y - mu1) / w1.mean() - w0 * (y - mu0) / w0.mean()
    std_err = float(np.sqrt(np.mean(influence ** 2) / n))
    return estimate, std_err


def iptw(
    ds: Dataset,
    ps_model: Optional[LearnerSpec] = None,
    stabilize: bool = False,
    trim: Optional[Tuple[float, float]] = None,
    covariates: Optional[Sequence[str]] = None,
    horvitz_thompson: bool = False,
    estimand: str = "ATE",
    variance: str = "sandwich",
    seed: int = 0,
    bootstrap_reps: Optional[int] = None,
) -> EstimateResult:
    """
    역확률 가중 추정

    Args:
        ds: 데이터셋 (이진 처치)
        ps_model: 성향점수 모형 (기본 로지스틱)
        stabilize: 안정화 가중치 사용 (점추정치는 Hájek 정규화로 동일)
        trim: 성향점수 절단 구간 (low, high); 없으면 0 또는 1인 성향점수는 오류
        horvitz_thompson: Hájek 대신 Horvitz-Thompson (ATE만 해당)
        estimand: ATE 또는 ATT
        variance: sandwich 또는 bootstrap (성향점수 모형을 재표본마다 다시 적합)

    Returns:
        EstimateResult (metadata에 절단 수, 가중치 요약)
    """
    if estimand not in ("ATE", "ATT"):
        raise DataValidationError("iptw", f"unsupported estimand: {estimand}")
    spec = ps_model or LearnerSpec(kind="logistic")
    d = require_binary_treatment(ds, "iptw")
    _arm_masks(d, "iptw")
    names = resolve_covariates(ds, covariates, "iptw")
    y = ds.y

    raw = propensity_scores(ds, spec, names, seed)
    p, truncated = _checked_propensity(raw, trim, "iptw")
    estimate, std_err = _weighted_contrast(y, d, p, estimand, horvitz_thompson)
    weights = iptw_weights(d, p, stabilize, estimand, trim)
    mean_control, mean_treated = weights.arm_means(d.tolist())

    metadata = {
        "propensity_model": learner_metadata(spec, len(names)),
        "covariates": names,
        "normalization": "horvitz_thompson" if horvitz_thompson and estimand == "ATE" else "hajek",
        "stabilized": stabilize,
        "trim_bounds": list(trim) if trim is not None else None,
        "n_truncated": truncated,
        "weight_mean_treated": mean_treated,
        "weight_mean_control": mean_control,
        "weight_max": max(weights.weights),
        "variance": variance,
    }

    if variance == "bootstrap":
        reps = bootstrap_reps or settings.bootstrap_reps
        std_err, failed = _bootstrap_std_err(ds, spec, names, trim, estimand, horvitz_thompson, seed, reps)
        metadata.update({"bootstrap_reps": reps, "bootstrap_failures": failed})
    elif variance != "sandwich":
        raise DataValidationError("iptw", f"unsupported variance option: {variance}")

    logger.info(f"IPTW 추정 완료: {estimand}={estimate:.4f}, 절단 {truncated}행")
    return EstimateResult.normal(Estimand(estimand), estimate, std_err, ds.n_rows, "iptw", metadata)


def _bootstrap_std_err(ds: Dataset, spec: LearnerSpec, names: List[str], trim, estimand: str,
                       horvitz_thompson: bool, seed: int, reps: int) -> Tuple[float, int]:
    """재표본마다 성향점수 모형을 다시 적합한 IPTW 추정치의 표준편차"""
    estimates = []
    failed = 0
    for rep in range(reps):
        rng = make_rng(seed, BOOTSTRAP_STREAM_KEY, rep)
        sample = ds.subset(rng.integers(0, ds.n_rows, size=ds.n_rows))
        try:
            d = sample.d
            _arm_masks(d, "iptw")
            p = propensity_scores(sample, spec, names, derive_seed(seed, rep))
            p, _ = _checked_propensity(p, trim, "iptw")
            estimates.append(_weighted_contrast(sample.y, d, p, estimand, horvitz_thompson)[0])
        except WorkbenchError:
            failed += 1
    if len(estimates) < 2:
        raise NumericalError("iptw", "bootstrap failed: fewer than 2 usable resamples", {"failed": failed})
    if failed:
        logger.warning(f"IPTW 부트스트랩 재표본 {failed}/{reps}개 실패 (제외)")
    return float(np.std(estimates, ddof=1)), failed


def aiptw(
    ds: Dataset,
    ps_model: Optional[LearnerSpec] = None,
    outcome_model: Optional[LearnerSpec] = None,
    covariates: Optional[Sequence[str]] = None,
    trim: Optional[Tuple[float, float]] = None,
    seed: int = 0,
) -> EstimateResult:
    """
    증강 역확률 가중 추정

    ψ_i = μ1(x_i) - μ0(x_i) + D_i(Y_i - μ1(x_i))/p_i - (1-D_i)(Y_i - μ0(x_i))/(1-p_i)
    추정치는 ψ의 평균, 표준오차는 경험적 영향함수에서 계산한다.
    """
    ps_spec = ps_model or LearnerSpec(kind="logistic")
    outcome_spec = outcome_model or LearnerSpec(kind="ols")
    d = require_binary_treatment(ds, "aiptw")
    _arm_masks(d, "aiptw")
    names = resolve_covariates(ds, covariates, "aiptw")
    y = ds.y

    p, truncated = _checked_propensity(propensity_scores(ds, ps_spec, names, seed), trim, "aiptw")
    mu0, mu1 = arm_predictions(ds, outcome_spec, names, y, seed)
    scores = mu1 - mu0 + d * (y - mu1) / p - (1.0 - d) * (y - mu0) / (1.0 - p)
    estimate = float(scores.mean())
    std_err = float(np.sqrt(np.mean((scores - estimate) ** 2) / ds.n_rows))
    return EstimateResult.normal(
        Estimand.ATE, estimate, std_err, ds.n_rows, "aiptw",
        {
            "propensity_model": learner_metadata(ps_spec, len(names)),
            "outcome_model": learner_metadata(outcome_spec, len(names)),
            "covariates": names,
            "trim_bounds": list(trim) if trim is not None else None,
            "n_truncated": truncated,
            "plug_in": float(np.mean(mu1 - mu0)),
        },
    )


def _fluctuation(target: np.ndarray, offset: np.ndarray, covariate: np.ndarray,
                 tol: float = 1e-12, max_iter: int = 100) -> Tuple[float, int]:
    """offset 고정 1차원 로지스틱 최대우도 (Newton)"""
    epsilon = 0.0
    iteration = 0
    for iteration in range(1, max_iter + 1):
        mu = expit(offset + epsilon * covariate)
        score = float(covariate @ (target - mu))
        information = float((covariate ** 2) @ (mu * (1.0 - mu)))
        if information <= 0.0:
            break
        step = score / information
        epsilon += step
        if abs(step) < tol:
            break
    else:
        logger.warning("TMLE 변동 모수 Newton 반복이 수렴하지 않음")
    return epsilon, iteration


def tmle_ate(
    ds: Dataset,
    ps_model: Optional[LearnerSpec] = None,
    outcome_model: Optional[LearnerSpec] = None,
    k_folds: int = 1,
    seed: int = 0,
    covariates: Optional[Sequence[str]] = None,
) -> EstimateResult:
    """
    표적 최대우도 ATE 추정

    1) Y를 관측 최소/최대로 [b, 1-b]에 재척도
    2) 처치군별 초기 결과모형 Q0(d, x)와 성향점수 g(x) 적합 (k_folds ≥ 2면 교차적합)
    3) clever covariate H = D/g - (1-D)/(1-g)로 변동 모수 ε 한 개를 로지스틱 최대우도로 적합
    4) 갱신된 Q1(1, x) - Q1(0, x)의 평균을 원척도로 되돌림

    Args:
        ds: 데이터셋 (이진 처치)
        ps_model: 성향점수 모형 (기본 로지스틱)
        outcome_model: 결과모형 (기본 OLS)
        k_folds: 1이면 표본 내 적합
        seed: 폴드/학습기 시드

    Returns:
        EstimateResult (metadata에 ε, 성향점수 절단 구간과 절단 수)
    """
    ps_spec = ps_model or LearnerSpec(kind="logistic")
    outcome_spec = outcome_model or LearnerSpec(kind="ols")
    if k_folds < 1:
        raise DataValidationError("tmle_ate", "k_folds must be at least 1", {"k_folds": k_folds})
    d = require_binary_treatment(ds, "tmle_ate")
    _arm_masks(d, "tmle_ate")
    names = resolve_covariates(ds, covariates, "tmle_ate")
    y = ds.y
    n = ds.n_rows

    low, high = float(y.min()), float(y.max())
    base_metadata = {
        "propensity_model": learner_metadata(ps_spec, len(names)),
        "outcome_model": learner_metadata(outcome_spec, len(names)),
        "covariates": names,
        "k_folds": k_folds,
        "propensity_bounds": list(TMLE_PROPENSITY_BOUNDS),
    }
    if high == low:
        logger.info("TMLE: 결과가 상수이므로 추정치 0")
        return EstimateResult.normal(Estimand.ATE, 0.0, 0.0, n, "tmle",
                                     {**base_metadata, "epsilon": 0.0, "constant_outcome": True, "n_truncated": 0})

    span = high - low
    margin = TMLE_OUTCOME_MARGIN
    scaled = margin + (1.0 - 2.0 * margin) * (y - low) / span

    raw_g = propensity_scores(ds, ps_spec, names, seed, k_folds)
    g_low, g_high = TMLE_PROPENSITY_BOUNDS
    truncated = int(np.count_nonzero((raw_g < g_low) | (raw_g > g_high)))
    g = np.clip(raw_g, g_low, g_high)

    q0, q1 = arm_predictions(ds, outcome_spec, names, scaled, seed, k_folds)
    q0 = np.clip(q0, TMLE_Q_FLOOR, 1.0 - TMLE_Q_FLOOR)
    q1 = np.clip(q1, TMLE_Q_FLOOR, 1.0 - TMLE_Q_FLOOR)
    observed_q = np.where(d == 1.0, q1, q0)

    h1 = 1.0 / g
    h0 = -1.0 / (1.0 - g)
    clever = np.where(d == 1.0, h1, h0)
    epsilon, iterations = _fluctuation(scaled, logit(observed_q), clever)

    q1_star = expit(logit(q1) + epsilon * h1)
    q0_star = expit(logit(q0) + epsilon * h0)
    observed_star = np.where(d == 1.0, q1_star, q0_star)
    psi = float(np.mean(q1_star - q0_star))
    influence = clever * (scaled - observed_star) + q1_star - q0_star - psi

    back = span / (1.0 - 2.0 * margin)
    estimate = psi * back
    std_err = float(np.sqrt(np.mean(influence ** 2) / n)) * back
    logger.info(f"TMLE 추정 완료: ATE={estimate:.4f}, ε={epsilon:.3g}, 성향점수 절단 {truncated}행")
    return EstimateResult.normal(
        Estimand.ATE, estimate, std_err, n, "tmle",
        {
            **base_metadata,
            "epsilon": epsilon,
            "fluctuation_iterations": iterations,
            "n_truncated": truncated,
            "outcome_range": [low, high],
            "plug_in_initial": float(np.mean(q1 - q0)) * back,
        },
    )
