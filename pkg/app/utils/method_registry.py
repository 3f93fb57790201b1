"""
추정 방법 이름 → 추정기 호출 매핑

CLI(--method), HTTP(/estimate), 몬테카를로 하네스가 같은 이름 체계를 공유한다.
"""

import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..config import settings
from ..dto.estimation import EstimateResult, MethodOptions
from ..errors import DataValidationError, WorkbenchError
from ..models.dataset import Dataset
from .confounder_estimators import aiptw, diff_in_means, iptw, ols_adjust, tmle_ate
from .dml import dml_estimate
from .iv_estimators import iv_linear, post_lasso_iv, split_sample_iv, wald

logger = logging.getLogger(__name__)

Runner = Callable[[Dataset, MethodOptions, int], EstimateResult]


def _k_folds(options: MethodOptions) -> int:
    return settings.default_k_folds if options.k_folds is None else options.k_folds


def _wald(ds: Dataset, options: MethodOptions, seed: int) -> EstimateResult:
    return wald(ds, options.instruments[0] if options.instruments else None)


METHODS: Dict[str, Runner] = {
    "diff": lambda ds, options, seed: diff_in_means(ds),
    "ols": lambda ds, options, seed: ols_adjust(ds, options.covariates),
    "iptw": lambda ds, options, seed: iptw(
        ds, options.ps_model, options.stabilize, options.trim, options.covariates,
        options.horvitz_thompson, options.iptw_estimand, options.variance, seed,
    ),
    "aiptw": lambda ds, options, seed: aiptw(
        ds, options.ps_model, options.outcome_model, options.covariates, options.trim, seed,
    ),
    "wald": _wald,
    "tsls": lambda ds, options, seed: iv_linear(
        ds, "tsls", options.covariates, options.instruments, options.first_stage_link,
    ),
    "tsri": lambda ds, options, seed: iv_linear(
        ds, "tsri", options.covariates, options.instruments, options.first_stage_link,
    ),
    "three-step": lambda ds, options, seed: iv_linear(
        ds, "three_step", options.covariates, options.instruments, "logistic",
    ),
    "post-lasso-iv": lambda ds, options, seed: post_lasso_iv(
        ds, options.covariates, options.instruments, options.lasso_lambda,
    ),
    "dml-plm": lambda ds, options, seed: dml_estimate(
        ds, "plm", options.learner, _k_folds(options), seed, options.covariates, None, options.comparison_mode,
    ),
    "dml-pliv": lambda ds, options, seed: dml_estimate(
        ds, "pliv", options.learner, _k_folds(options), seed, options.covariates, options.instruments,
        options.comparison_mode,
    ),
    "tmle": lambda ds, options, seed: tmle_ate(
        ds, options.ps_model, options.outcome_model, _k_folds(options), seed, options.covariates,
    ),
    "split-sample-iv": lambda ds, options, seed: split_sample_iv(
        ds, options.covariates, options.instruments, seed, options.split_cross_fit,
    ),
}

# 도구변수가 필요한 방법
IV_METHODS = ("wald", "tsls", "tsri", "three-step", "post-lasso-iv", "dml-pliv", "split-sample-iv")

# --method all 출력 순서
ALL_METHODS: List[str] = [
    "diff", "ols", "iptw", "aiptw", "tmle", "dml-plm",
    "wald", "tsls", "tsri", "three-step", "post-lasso-iv", "split-sample-iv", "dml-pliv",
]


def run_method(ds: Dataset, method: str, options: Optional[MethodOptions] = None, seed: int = 0) -> EstimateResult:
    """이름으로 추정기 실행"""
    runner = METHODS.get(method)
    if runner is None:
        raise DataValidationError("estimate", f"unknown method: {method}", {"methods": sorted(METHODS)})
    return runner(ds, options or MethodOptions(), seed)


def run_all(
    ds: Dataset,
    options: Optional[MethodOptions] = None,
    seed: int = 0,
) -> List[Tuple[str, Optional[EstimateResult], Optional[str]]]:
    """
    모든 방법을 실행해 (방법, 결과, 오류 메시지) 목록 반환

    도구변수가 없으면 IV 계열은 건너뛰고, 개별 방법의 실패는 메시지로 남긴다.
    """
    options = options or MethodOptions()
    has_instruments = bool(options.instruments or ds.instruments)
    rows = []
    for method in ALL_METHODS:
        if method in IV_METHODS and not has_instruments:
            rows.append((method, None, "skipped: no instruments"))
            continue
        try:
            rows.append((method, run_method(ds, method, options, seed), None))
        except (WorkbenchError, np.linalg.LinAlgError) as e:
            message = e.message if isinstance(e, WorkbenchError) else str(e)
            logger.warning(f"방법 {method} 실패: {message}")
            rows.append((method, None, message))
    return rows
