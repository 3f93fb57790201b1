"""
도구변수 추정기

- wald: 이진 도구변수 기준 결과 대비 / 처치 대비 (델타법 표준오차)
- iv_linear: tsls / tsri(2단계 잔차 포함) / three_step(로지스틱 1단계 → 적합값을 도구로 사용)
- post_lasso_iv: 1단계 LASSO로 도구변수 선택 후 tsls
- split_sample_iv: 한 절반에서 1단계를 적합하고 다른 절반에서 적합값을 도구로 사용
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from ..config import settings
from ..dto.estimation import Estimand, EstimateResult
from ..errors import DataValidationError, NumericalError
from ..models.dataset import Dataset
from .iv_algebra import first_stage_statistic, iv_design, tsls_fit
from .learners import dependent_column, fit_lasso, fit_logistic, fit_ols
from .nuisance import resolve_covariates, resolve_instruments
from .random_streams import assign_folds

logger = logging.getLogger(__name__)

# 처치 대비가 이 값 이하이면 무관한 도구변수로 본다
IRRELEVANT_CONTRAST = 1e-10

IV_MODES = ("tsls", "tsri", "three_step")


def _binary_groups(values: np.ndarray, name: str, step: str):
    if not np.all((values == 0.0) | (values == 1.0)):
        raise DataValidationError(step, f"instrument {name} must be binary (0/1)", {"instrument": name})
    high = values == 1.0
    if high.all() or not high.any():
        raise DataValidationError(step, f"instrument {name} must have both levels present", {"instrument": name})
    return high, ~high


def _mean_variance(values: np.ndarray) -> float:
    """표본평균의 분산 (ddof=1; 관측 1개면 0)"""
    return float(values.var(ddof=1)) / values.size if values.size > 1 else 0.0


def _mean_covariance(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2:
        return 0.0
    return float(np.cov(a, b, ddof=1)[0, 1]) / a.size


def wald(ds: Dataset, instrument: Optional[str] = None) -> EstimateResult:
    """
    Wald 추정 (E[Y|Z=1] - E[Y|Z=0]) / (E[D|Z=1] - E[D|Z=0])

    Args:
        ds: 데이터셋
        instrument: 이진 도구변수 열 (기본: 첫 번째 도구변수 역할)

    Returns:
        LATE 추정치와 델타법 표준오차
    """
    name = instrument or (ds.instruments[0] if ds.instruments else None)
    if name is None:
        raise DataValidationError("wald", "at least one instrument is required")
    z = ds.column(name)
    high, low = _binary_groups(z, name, "wald")
    y, d = ds.y, ds.d

    numerator = y[high].mean() - y[low].mean()
    denominator = d[high].mean() - d[low].mean()
    if abs(denominator) <= IRRELEVANT_CONTRAST:
        raise NumericalError("wald", "irrelevant instrument: treatment contrast across the instrument is zero",
                             {"instrument": name, "denominator": float(denominator)})
    beta = numerator / denominator

    var_numerator = _mean_variance(y[high]) + _mean_variance(y[low])
    var_denominator = _mean_variance(d[high]) + _mean_variance(d[low])
    covariance = _mean_covariance(y[high], d[high]) + _mean_covariance(y[low], d[low])
    variance = (var_numerator - 2.0 * beta * covariance + beta ** 2 * var_denominator) / denominator ** 2
    std_err = float(np.sqrt(max(variance, 0.0)))
    return EstimateResult.normal(
        Estimand.LATE, beta, std_err, ds.n_rows, "wald",
        {"instrument": name, "outcome_contrast": numerator, "treatment_contrast": denominator},
    )


def _first_stage_metadata(d: np.ndarray, exogenous: np.ndarray, excluded: np.ndarray) -> dict:
    statistic = first_stage_statistic(d, exogenous, excluded)
    return {"first_stage_f": statistic.f, "first_stage_df1": statistic.df1, "first_stage_df2": statistic.df2}


def iv_linear(
    ds: Dataset,
    mode: str = "tsls",
    covariates: Optional[Sequence[str]] = None,
    instruments: Optional[Sequence[str]] = None,
    first_stage_link: str = "linear",
) -> EstimateResult:
    """
    선형 도구변수 추정

    Args:
        ds: 데이터셋
        mode: tsls, tsri, three_step
        covariates: 외생 공변량 (기본: 공변량 역할)
        instruments: 도구변수 (기본: 도구변수 역할)
        first_stage_link: tsri의 1단계 연결함수 (tsls는 linear만 허용, three_step은 항상 logistic)

    Returns:
        LATE 추정치 (HC0 표준오차; 동분산 표준오차와 1단계 F는 metadata)
    """
    if mode not in IV_MODES:
        raise DataValidationError("iv_linear", f"unknown mode: {mode}", {"modes": list(IV_MODES)})
    if first_stage_link not in ("linear", "logistic"):
        raise DataValidationError("iv_linear", f"unknown first-stage link: {first_stage_link}")
    if mode == "tsls" and first_stage_link == "logistic":
        raise DataValidationError("iv_linear", "forbidden regression: tsls requires a linear first stage",
                                  {"mode": mode, "first_stage_link": first_stage_link})
    cov_names = resolve_covariates(ds, covariates, "iv_linear")
    iv_names = resolve_instruments(ds, instruments, cov_names, "iv_linear")
    exogenous = ds.matrix(cov_names)
    excluded = ds.matrix(iv_names)
    y, d = ds.y, ds.d
    k = exogenous.shape[1]

    regressors, instrument_matrix = iv_design(exogenous, d, excluded)
    if dependent_column(instrument_matrix) is not None:
        raise NumericalError("iv_linear", "collinear instruments", {"instruments": iv_names})
    metadata = {"mode": mode, "covariates": cov_names, "instruments": iv_names}
    metadata.update(_first_stage_metadata(d, exogenous, excluded))

    if mode == "tsls":
        fit = tsls_fit(y, regressors, instrument_matrix, "iv_linear")
        estimate = fit.coefficients[1 + k]
        std_err = fit.std_errors(robust=True)[1 + k]
        metadata["std_err_homoskedastic"] = fit.std_errors(robust=False)[1 + k]
        metadata["first_stage_link"] = "linear"
    elif mode == "tsri":
        first_design = np.column_stack([exogenous, excluded])
        if first_stage_link == "logistic":
            fitted = fit_logistic(first_design, d).predict(first_design)
        else:
            fitted = fit_ols(first_design, d).fitted
        control = d - fitted
        second = fit_ols(np.column_stack([exogenous, d, control]), y)
        estimate = second.coefficients[1 + k]
        std_err = second.std_errors(robust=True)[1 + k]
        metadata.update({
            "first_stage_link": first_stage_link,
            "std_err_homoskedastic": second.std_errors(robust=False)[1 + k],
            "control_function_coefficient": second.coefficients[2 + k],
            "std_err_ignores_generated_regressor": True,
        })
    else:
        first_design = np.column_stack([exogenous, excluded])
        probability = fit_logistic(first_design, d).predict(first_design)
        step_two = fit_ols(np.column_stack([exogenous, probability]), d)
        step_two_f = first_stage_statistic(d, exogenous, probability.reshape(-1, 1))
        regressors, fitted_instrument = iv_design(exogenous, d, probability.reshape(-1, 1))
        fit = tsls_fit(y, regressors, fitted_instrument, "iv_linear")
        estimate = fit.coefficients[1 + k]
        std_err = fit.std_errors(robust=True)[1 + k]
        metadata.update({
            "first_stage_link": "logistic",
            "std_err_homoskedastic": fit.std_errors(robust=False)[1 + k],
            "step_two_coefficient": step_two.coefficients[1 + k],
            "step_two_f": step_two_f.f,
        })

    logger.info(f"IV 추정 완료 ({mode}): β={estimate:.4f}, 1단계 F={metadata['first_stage_f']:.2f}")
    return EstimateResult.normal(Estimand.LATE, estimate, std_err, ds.n_rows, mode.replace("_", "-"), metadata)


def post_lasso_iv(
    ds: Dataset,
    covariates: Optional[Sequence[str]] = None,
    instruments: Optional[Sequence[str]] = None,
    lam: Optional[float] = None,
) -> EstimateResult:
    """
    Post-LASSO 도구변수 추정

    D ~ (X, Z) LASSO에서 계수가 0이 아닌 도구변수만 남기고 tsls를 다시 적합한다.
    남은 도구변수가 없으면 퇴화 추정 대신 오류를 보고한다.
    """
    penalty = settings.post_lasso_lambda if lam is None else lam
    if penalty < 0:
        raise DataValidationError("post_lasso_iv", "lambda must be nonnegative", {"lambda": penalty})
    cov_names = resolve_covariates(ds, covariates, "post_lasso_iv")
    iv_names = resolve_instruments(ds, instruments, cov_names, "post_lasso_iv")
    k = len(cov_names)

    selection = fit_lasso(np.column_stack([ds.matrix(cov_names), ds.matrix(iv_names)]), ds.d, penalty)
    instrument_coefficients = selection.coefficients[1 + k:]
    retained: List[str] = [name for name, value in zip(iv_names, instrument_coefficients) if value != 0.0]
    dropped = [name for name in iv_names if name not in retained]
    if not retained:
        raise NumericalError("post_lasso_iv", "no instruments retained",
                             {"lambda": penalty, "instruments": iv_names})
    logger.info(f"Post-LASSO 도구변수 선택: {len(retained)}/{len(iv_names)}개 유지 (λ={penalty})")

    result = iv_linear(ds, "tsls", cov_names, retained)
    metadata = dict(result.metadata)
    metadata.update({
        "lambda": penalty,
        "retained_instruments": retained,
        "dropped_instruments": dropped,
        "post_selection_first_stage_f": result.metadata["first_stage_f"],
    })
    return result.model_copy(update={"method": "post-lasso-iv", "metadata": metadata})


def split_sample_iv(
    ds: Dataset,
    covariates: Optional[Sequence[str]] = None,
    instruments: Optional[Sequence[str]] = None,
    seed: int = 0,
    cross_fit: bool = True,
) -> EstimateResult:
    """
    표본분할 도구변수 추정

    폴드 배정(k=2)으로 나눈 한 절반에서 D ~ (1, X, Z)를 적합하고, 다른 절반에서 그 예측값 D̂를
    단일 도구변수로 tsls를 수행한다. cross_fit이면 두 방향의 평균을 보고한다.
    """
    cov_names = resolve_covariates(ds, covariates, "split_sample_iv")
    iv_names = resolve_instruments(ds, instruments, cov_names, "split_sample_iv")
    exogenous = ds.matrix(cov_names)
    excluded = ds.matrix(iv_names)
    first_design = np.column_stack([exogenous, excluded])
    y, d = ds.y, ds.d
    k = exogenous.shape[1]

    folds = assign_folds(ds.n_rows, 2, seed)
    directions = [(0, 1), (1, 0)] if cross_fit else [(0, 1)]
    estimates = []
    variances = []
    for fit_half, estimate_half in directions:
        train = folds == fit_half
        target = folds == estimate_half
        first = fit_ols(first_design[train], d[train])
        fitted = first.predict(first_design[target])
        regressors, instrument_matrix = iv_design(exogenous[target], d[target], fitted.reshape(-1, 1))
        fit = tsls_fit(y[target], regressors, instrument_matrix, "split_sample_iv")
        estimates.append(float(fit.coefficients[1 + k]))
        variances.append(float(fit.covariance_hc0[1 + k, 1 + k]))

    estimate = float(np.mean(estimates))
    std_err = float(np.sqrt(np.sum(variances))) / len(estimates)
    return EstimateResult.normal(
        Estimand.LATE, estimate, std_err, ds.n_rows, "split-sample-iv",
        {"covariates": cov_names, "instruments": iv_names, "cross_fit": cross_fit, "half_estimates": estimates},
    )
