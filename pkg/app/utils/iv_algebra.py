"""
도구변수 회귀 공통 대수

추정기(iv_estimators)와 진단(diagnostics)이 함께 쓰는 2SLS 적합과 1단계 F 통계량.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from ..errors import NumericalError
from .learners import dependent_column, fit_ols, with_intercept

logger = logging.getLogger(__name__)

# 제약 모형 SSR 대비 이 비율 이하의 비제약 SSR은 완전 적합(F = +inf)으로 본다
PERFECT_FIT_RATIO = 1e-12


@dataclass(frozen=True)
class TslsFit:
    """2SLS 적합 결과 (계수 순서는 회귀변수 행렬 S의 열 순서)"""
    coefficients: np.ndarray
    covariance: np.ndarray
    covariance_hc0: np.ndarray
    residuals: np.ndarray
    projected: np.ndarray

    def std_errors(self, robust: bool = True) -> np.ndarray:
        cov = self.covariance_hc0 if robust else self.covariance
        return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def tsls_fit(y: np.ndarray, regressors: np.ndarray, instruments: np.ndarray, step: str = "tsls") -> TslsFit:
    """
    β = (SᵀP_F S)⁻¹ SᵀP_F y

    Args:
        y: 결과
        regressors: S (절편, 외생 공변량, 내생 처치 포함)
        instruments: F (절편, 외생 공변량, 도구변수 포함)
        step: 오류 메시지에 기록할 단계 이름

    Returns:
        TslsFit (잔차는 적합된 처치가 아닌 관측된 처치 기준)
    """
    n, n_regressors = regressors.shape
    if instruments.shape[1] < n_regressors:
        raise NumericalError(step, "under-identified: fewer instruments than endogenous regressors")
    if n <= instruments.shape[1]:
        raise NumericalError(step, f"need more rows than instrument columns, got {n}")
    if dependent_column(instruments) is not None:
        raise NumericalError(step, "collinear instruments", {"dependent_column": dependent_column(instruments)})

    q, _ = linalg.qr(instruments, mode="economic")
    projected = q @ (q.T @ regressors)
    if dependent_column(projected) is not None:
        raise NumericalError(step, "first-stage rank deficiency: projected regressors are collinear")

    gram = projected.T @ regressors
    coefficients = linalg.solve(gram, projected.T @ y)
    residuals = y - regressors @ coefficients
    bread = linalg.inv(gram)
    sigma2 = float(residuals @ residuals) / (n - n_regressors)
    meat = projected.T @ (projected * (residuals ** 2)[:, None])
    return TslsFit(
        coefficients=coefficients,
        covariance=sigma2 * (bread + bread.T) / 2.0,
        covariance_hc0=bread @ meat @ bread.T,
        residuals=residuals,
        projected=projected,
    )


def iv_design(exogenous: np.ndarray, endogenous: np.ndarray, excluded: np.ndarray):
    """S = (1, X, D), F = (1, X, Z)"""
    regressors = with_intercept(np.column_stack([exogenous, endogenous]), True)
    instruments = with_intercept(np.column_stack([exogenous, excluded]), True)
    return regressors, instruments


@dataclass(frozen=True)
class FirstStageStatistic:
    f: float
    df1: int
    df2: int
    p: float
    infinite: bool
    robust: bool


def first_stage_statistic(d: np.ndarray, exogenous: np.ndarray, excluded: np.ndarray, robust: bool = False) -> FirstStageStatistic:
    """D ~ (1, X, Z)에서 Z 계수 결합 0 검정 F (robust면 HC0 Wald / df1)"""
    k = exogenous.shape[1]
    j = excluded.shape[1]
    unrestricted = fit_ols(np.column_stack([exogenous, excluded]), d)
    n = len(d)
    df1, df2 = j, n - (1 + k + j)

    if robust:
        slope = unrestricted.coefficients[1 + k:]
        block = unrestricted.covariance_hc0[1 + k:, 1 + k:]
        try:
            f_value = float(slope @ linalg.solve(block, slope, assume_a="sym")) / df1
            infinite = not np.isfinite(f_value)
        except (linalg.LinAlgError, ValueError):
            f_value, infinite = float("inf"), True
    else:
        restricted = fit_ols(exogenous, d)
        ssr_u = float(unrestricted.residuals @ unrestricted.residuals)
        ssr_r = float(restricted.residuals @ restricted.residuals)
        infinite = ssr_u <= PERFECT_FIT_RATIO * ssr_r
        f_value = float("inf") if infinite else ((ssr_r - ssr_u) / df1) / (ssr_u / df2)

    if infinite:
        f_value = float("inf")
        p_value = 0.0
    else:
        p_value = float(stats.f.sf(f_value, df1, df2))
    return FirstStageStatistic(f=f_value, df1=df1, df2=df2, p=p_value, infinite=infinite, robust=robust)
