"""
장애모수(nuisance) 모형 공통 처리

성향점수와 처치군별 결과모형 예측을 LearnerSpec 선언에서 만들어낸다.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..dto.estimation import LearnerSpec
from ..errors import DataValidationError
from ..models.dataset import Dataset
from .learners import cross_fit, fit_learner
from .random_streams import assign_folds, derive_seed

logger = logging.getLogger(__name__)


def require_binary_treatment(ds: Dataset, step: str) -> np.ndarray:
    d = ds.d
    if not np.all((d == 0.0) | (d == 1.0)):
        raise DataValidationError(step, "non-binary treatment", {"treatment": ds.treatment_name})
    return d


def resolve_covariates(ds: Dataset, covariates: Optional[Sequence[str]], step: str) -> List[str]:
    """공변량 목록 확정 (기본: 데이터셋 공변량 역할); 처치/결과 열 포함 시 오류"""
    names = ds.covariates if covariates is None else list(covariates)
    forbidden = {ds.treatment_name, ds.outcome_name}
    clash = [name for name in names if name in forbidden]
    if clash:
        raise DataValidationError(step, f"covariate list names the treatment or outcome: {clash}", {"columns": clash})
    for name in names:
        ds.column(name)
    return names


def resolve_instruments(ds: Dataset, instruments: Optional[Sequence[str]], covariates: Sequence[str], step: str) -> List[str]:
    names = ds.instruments if instruments is None else list(instruments)
    if not names:
        raise DataValidationError(step, "at least one instrument is required")
    overlap = sorted(set(names) & set(covariates))
    if overlap:
        raise DataValidationError(step, f"instruments must be disjoint from covariates: {overlap}", {"columns": overlap})
    forbidden = {ds.treatment_name, ds.outcome_name}
    if forbidden & set(names):
        raise DataValidationError(step, "instrument list names the treatment or outcome")
    for name in names:
        ds.column(name)
    return names


def learner_design(ds: Dataset, spec: LearnerSpec, covariates: Sequence[str]) -> np.ndarray:
    """학습기 설계행렬: features가 있으면 그 열, 없으면 공변량"""
    names = list(covariates) if spec.features is None else list(spec.features)
    forbidden = {ds.treatment_name, ds.outcome_name}
    if forbidden & set(names):
        raise DataValidationError("learner_design", "learner features name the treatment or outcome", {"features": names})
    return ds.matrix(names)


def propensity_scores(
    ds: Dataset,
    spec: LearnerSpec,
    covariates: Sequence[str],
    seed: int,
    k_folds: int = 1,
) -> np.ndarray:
    """P(D=1 | X) 예측 (kind=column이면 열 값을 그대로 사용, k_folds ≥ 2면 교차적합)"""
    if spec.kind == "column":
        if not spec.column:
            raise DataValidationError("propensity", "column learner requires a column name")
        return np.array(ds.column(spec.column), dtype=np.float64)
    d = ds.d
    design = learner_design(ds, spec, covariates)
    if k_folds >= 2:
        return cross_fit(spec, design, d, k_folds, seed).predictions
    return fit_learner(spec, design, d, derive_seed(seed, 0)).predict(design)


def arm_predictions(
    ds: Dataset,
    spec: LearnerSpec,
    covariates: Sequence[str],
    target: np.ndarray,
    seed: int,
    k_folds: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    처치군별 결과모형 예측 (μ0(x), μ1(x))

    각 처치군에서 따로 적합한 모형으로 전체 행을 예측한다. k_folds ≥ 2면 행 i의 예측은
    i가 속하지 않은 폴드로 적합한 모형에서 나온다.
    """
    if spec.kind in ("column", "logistic"):
        raise DataValidationError("outcome_model", f"outcome model kind '{spec.kind}' is not supported")
    d = ds.d
    design = learner_design(ds, spec, covariates)
    n = ds.n_rows
    mu = {0: np.empty(n), 1: np.empty(n)}
    folds = assign_folds(n, k_folds, seed) if k_folds >= 2 else np.zeros(n, dtype=np.int64)

    for fold in range(max(k_folds, 1)):
        predict_rows = folds == fold if k_folds >= 2 else np.ones(n, dtype=bool)
        train_rows = ~predict_rows if k_folds >= 2 else np.ones(n, dtype=bool)
        for arm in (0, 1):
            rows = train_rows & (d == arm)
            if not rows.any():
                raise DataValidationError("outcome_model", f"empty arm {arm} in training fold {fold}")
            model = fit_learner(spec, design[rows], target[rows], derive_seed(seed, fold, arm))
            mu[arm][predict_rows] = model.predict(design[predict_rows])
    return mu[0], mu[1]
