"""
적합 기본 연산 모듈

추정기와 장애모수(nuisance) 모형이 공통으로 쓰는 학습기:
- fit_ols: 피벗 QR 최소제곱 + 동분산/HC0 공분산
- fit_logistic: IRLS 로지스틱 회귀 (표준화 척도에서 분리 탐지)
- fit_lasso / fit_ridge: 표준화 열 기준 벌점 회귀, 절편 비벌점
- fit_learner / cross_fit: 선언형 LearnerSpec으로 예측기 적합 및 폴드 외 예측
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit

from ..config import settings
from ..dto.estimation import LearnerSpec
from ..errors import DataValidationError, NumericalError
from .random_streams import assign_folds, derive_seed

logger = logging.getLogger(__name__)

# 최대 특이값 대비 이 비율 미만의 특이값은 0으로 본다
RANK_TOLERANCE = 1e-10

# 표준화 척도 계수가 이 값을 넘으면 완전 분리로 판정
SEPARATION_LIMIT = 15.0

# 로지스틱 예측 확률 하한/상한
PROBABILITY_FLOOR = 1e-12


def as_design(design, n_rows: Optional[int] = None) -> np.ndarray:
    """벡터/행렬 입력을 (n, p) float 행렬로 정규화"""
    matrix = np.asarray(design, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2:
        raise DataValidationError("design", "design must be a matrix")
    if n_rows is not None and matrix.shape[0] != n_rows:
        raise DataValidationError("design", f"design has {matrix.shape[0]} rows, expected {n_rows}")
    return matrix


def with_intercept(design: np.ndarray, intercept: bool) -> np.ndarray:
    if not intercept:
        return design
    return np.column_stack([np.ones(design.shape[0]), design])


def dependent_column(matrix: np.ndarray) -> Optional[int]:
    """선형 종속인 첫 번째 열 인덱스 (없으면 None)"""
    if matrix.shape[1] == 0:
        return None
    norms = np.linalg.norm(matrix, axis=0)
    if np.any(norms == 0):
        return int(np.flatnonzero(norms == 0)[0])
    scaled = matrix / norms
    singular = linalg.svdvals(scaled)
    if singular[-1] >= RANK_TOLERANCE * singular[0] and len(singular) == matrix.shape[1]:
        return None
    for j in range(1, matrix.shape[1] + 1):
        singular = linalg.svdvals(scaled[:, :j])
        if len(singular) < j or singular[-1] < RANK_TOLERANCE * singular[0]:
            return j - 1
    return None


def check_rank(matrix: np.ndarray, step: str, intercept: bool = False) -> None:
    """랭크 부족 시 종속 열 인덱스(사용자 설계 기준)를 담아 NumericalError"""
    column = dependent_column(matrix)
    if column is None:
        return
    if intercept:
        label = "intercept" if column == 0 else str(column - 1)
    else:
        label = str(column)
    raise NumericalError(step, f"rank-deficient design: column {label} is linearly dependent",
                         {"dependent_column": label})


@dataclass(frozen=True)
class LinearFit:
    """선형 적합 결과 (계수는 절편이 있으면 절편이 첫 번째)"""
    coefficients: np.ndarray
    covariance: np.ndarray
    covariance_hc0: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    rank: int
    lam: float = 0.0
    intercept: bool = True

    def predict(self, design) -> np.ndarray:
        matrix = as_design(design)
        return with_intercept(matrix, self.intercept) @ self.coefficients

    def std_errors(self, robust: bool = True) -> np.ndarray:
        cov = self.covariance_hc0 if robust else self.covariance
        return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2.0


def _sandwich(design: np.ndarray, residuals: np.ndarray, bread: np.ndarray, dof: int):
    """동분산/HC0 공분산"""
    sigma2 = float(residuals @ residuals) / max(dof, 1)
    homoskedastic = sigma2 * bread @ (design.T @ design) @ bread
    meat = design.T @ (design * (residuals ** 2)[:, None])
    return _symmetrize(homoskedastic), _symmetrize(bread @ meat @ bread)


def fit_ols(design, y, intercept: bool = True) -> LinearFit:
    """
    최소제곱 적합

    Args:
        design: (n, k) 설계행렬 (절편 열 제외)
        y: 길이 n 반응 벡터
        intercept: 절편 포함 여부

    Returns:
        LinearFit (계수, 동분산/HC0 공분산, 잔차)
    """
    y = np.asarray(y, dtype=np.float64)
    matrix = with_intercept(as_design(design, len(y)), intercept)
    n, p = matrix.shape
    if n < p + 1:
        raise DataValidationError("fit_ols", f"need at least {p + 1} rows for {p} columns, got {n}")
    check_rank(matrix, "fit_ols", intercept)

    q, r, pivot = linalg.qr(matrix, mode="economic", pivoting=True)
    coefficients = np.empty(p)
    coefficients[pivot] = linalg.solve_triangular(r, q.T @ y)

    r_inverse = linalg.solve_triangular(r, np.eye(p))
    bread = np.empty((p, p))
    bread[np.ix_(pivot, pivot)] = r_inverse @ r_inverse.T

    fitted = matrix @ coefficients
    residuals = y - fitted
    sigma2 = float(residuals @ residuals) / (n - p)
    meat = matrix.T @ (matrix * (residuals ** 2)[:, None])
    return LinearFit(
        coefficients=coefficients,
        covariance=_symmetrize(sigma2 * bread),
        covariance_hc0=_symmetrize(bread @ meat @ bread),
        residuals=residuals,
        fitted=fitted,
        rank=p,
        lam=0.0,
        intercept=intercept,
    )


def _standardize(matrix: np.ndarray):
    """모집단 표준편차(1/n)로 열 표준화; 분산 0 열은 0으로 둔다"""
    center = matrix.mean(axis=0)
    scale = matrix.std(axis=0)
    varying = scale > 0
    standardized = np.zeros_like(matrix)
    standardized[:, varying] = (matrix[:, varying] - center[varying]) / scale[varying]
    return standardized, center, scale, varying


def lasso_lambda_max(design, y) -> float:
    """모든 기울기를 0으로 만드는 최소 λ = max_j |(1/n)<x̃_j, y - ȳ>|"""
    y = np.asarray(y, dtype=np.float64)
    standardized, _, _, varying = _standardize(as_design(design, len(y)))
    centered = y - y.mean()
    n = len(y)
    values = [abs(standardized[:, j] @ centered / n) for j in np.flatnonzero(varying)]
    return float(max(values)) if values else 0.0


def _penalized_fit(matrix: np.ndarray, y: np.ndarray, slopes: np.ndarray, lam: float, bread_penalty: np.ndarray) -> LinearFit:
    """원척도 기울기로부터 절편/잔차/공분산을 채운 LinearFit"""
    center = matrix.mean(axis=0)
    intercept = float(y.mean() - slopes @ center)
    coefficients = np.concatenate([[intercept], slopes])
    full = with_intercept(matrix, True)
    fitted = full @ coefficients
    residuals = y - fitted
    active = np.concatenate([[True], slopes != 0])
    p = full.shape[1]
    covariance = np.zeros((p, p))
    covariance_hc0 = np.zeros((p, p))
    sub = full[:, active]
    bread = np.linalg.pinv(sub.T @ sub + bread_penalty[np.ix_(active, active)])
    cov, cov_hc0 = _sandwich(sub, residuals, bread, len(y) - int(active.sum()))
    covariance[np.ix_(active, active)] = cov
    covariance_hc0[np.ix_(active, active)] = cov_hc0
    return LinearFit(
        coefficients=coefficients,
        covariance=covariance,
        covariance_hc0=covariance_hc0,
        residuals=residuals,
        fitted=fitted,
        rank=int(active.sum()),
        lam=float(lam),
        intercept=True,
    )


def fit_lasso(design, y, lam: float, tol: float = 1e-9, max_sweeps: int = 100000) -> LinearFit:
    """
    LASSO 순환 좌표하강

    목적함수 (1/2n)||y - Xβ||² + λ||β̃||₁ (β̃는 표준화 열 기준 계수), 절편은 벌점 없음.
    최대 갱신폭이 tol 미만이면 수렴으로 본다. 계수는 원척도로 보고한다.
    """
    if lam < 0:
        raise DataValidationError("fit_lasso", "lambda must be nonnegative", {"lambda": lam})
    y = np.asarray(y, dtype=np.float64)
    matrix = as_design(design, len(y))
    n, k = matrix.shape
    if n < 2:
        raise DataValidationError("fit_lasso", "need at least 2 rows")
    standardized, _, scale, varying = _standardize(matrix)

    beta = np.zeros(k)
    residual = y - y.mean()
    columns = np.flatnonzero(varying)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in columns:
            x_j = standardized[:, j]
            rho = x_j @ residual / n + beta[j]
            updated = np.sign(rho) * max(abs(rho) - lam, 0.0)
            delta = updated - beta[j]
            if delta != 0.0:
                residual -= delta * x_j
                beta[j] = updated
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    else:
        logger.warning(f"LASSO 좌표하강이 {max_sweeps}회 내에 수렴하지 않음 (λ={lam})")

    slopes = np.zeros(k)
    slopes[varying] = beta[varying] / scale[varying]
    penalty = np.zeros(k + 1)
    logger.debug(f"LASSO 적합 완료: λ={lam}, 비영 계수 {int(np.count_nonzero(slopes))}/{k}, {sweeps}회 순회")
    return _penalized_fit(matrix, y, slopes, lam, np.diag(penalty))


def fit_ridge(design, y, alpha: float) -> LinearFit:
    """표준화 열 기준 ridge 닫힌 해 (목적함수 (1/2n)||y - Xβ||² + (α/2)||β̃||²)"""
    if alpha < 0:
        raise DataValidationError("fit_ridge", "alpha must be nonnegative", {"alpha": alpha})
    y = np.asarray(y, dtype=np.float64)
    matrix = as_design(design, len(y))
    n, k = matrix.shape
    if n < 2:
        raise DataValidationError("fit_ridge", "need at least 2 rows")
    centered = matrix - matrix.mean(axis=0)
    scale = matrix.std(axis=0)
    penalty = n * alpha * scale ** 2
    gram = centered.T @ centered + np.diag(penalty)
    if alpha == 0:
        check_rank(with_intercept(matrix, True), "fit_ridge", True)
    slopes = linalg.solve(gram, centered.T @ (y - y.mean()), assume_a="pos")
    return _penalized_fit(matrix, y, slopes, alpha, np.diag(np.concatenate([[0.0], penalty])))


@dataclass(frozen=True)
class Predictor:
    """적합된 예측기 기본형"""
    kind: str

    def predict(self, design) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearPredictor(Predictor):
    fit: LinearFit

    def predict(self, design) -> np.ndarray:
        return self.fit.predict(design)


@dataclass(frozen=True)
class LogisticPredictor(Predictor):
    coefficients: np.ndarray
    intercept: bool
    iterations: int
    converged: bool

    def predict(self, design) -> np.ndarray:
        eta = with_intercept(as_design(design), self.intercept) @ self.coefficients
        return np.clip(expit(eta), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)


def fit_logistic(design, y, intercept: bool = True, tol: float = 1e-8, max_iter: int = 100) -> LogisticPredictor:
    """
    IRLS 로지스틱 회귀

    표준화된 열(절편이 있으면 중심화 포함)에서 Newton 반복을 수행하고 원척도로 되돌린다.
    기울기 계수 절대값이 SEPARATION_LIMIT를 넘거나 반응이 상수이면 분리로 판정한다.
    """
    y = np.asarray(y, dtype=np.float64)
    raw = as_design(design, len(y))
    n, k = raw.shape
    p = k + int(intercept)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataValidationError("fit_logistic", "response must be binary (0/1)")
    if n < p + 1:
        raise DataValidationError("fit_logistic", f"need at least {p + 1} rows for {p} columns, got {n}")
    if y.min() == y.max():
        raise NumericalError("fit_logistic", "separation: response is constant", {"value": float(y[0])})

    center = raw.mean(axis=0) if intercept else np.zeros(k)
    scale = raw.std(axis=0) if intercept else np.sqrt((raw ** 2).mean(axis=0))
    scale = np.where(scale > 0, scale, 1.0)
    matrix = with_intercept((raw - center) / scale, intercept)
    check_rank(matrix, "fit_logistic", intercept)
    slope_index = slice(1, None) if intercept else slice(None)

    beta = np.zeros(p)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        mu = expit(matrix @ beta)
        weights = mu * (1.0 - mu)
        hessian = matrix.T @ (matrix * weights[:, None])
        gradient = matrix.T @ (y - mu)
        try:
            step = linalg.solve(hessian, gradient, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            raise NumericalError("fit_logistic", "separation: information matrix is singular",
                                 {"iteration": iteration})
        beta = beta + step
        if np.any(np.abs(beta[slope_index]) > SEPARATION_LIMIT):
            raise NumericalError("fit_logistic", "separation: standardized coefficient exceeds limit",
                                 {"iteration": iteration, "max_abs_coefficient": float(np.max(np.abs(beta[slope_index])))})
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    if not converged:
        logger.warning(f"로지스틱 IRLS가 {max_iter}회 내에 수렴하지 않음")

    slopes = beta[slope_index] / scale
    if intercept:
        coefficients = np.concatenate([[beta[0] - slopes @ center], slopes])
    else:
        coefficients = slopes
    return LogisticPredictor(kind="logistic", coefficients=coefficients, intercept=intercept,
                             iterations=iteration, converged=converged)


def fit_learner(spec: LearnerSpec, design, y, seed: int = 0) -> Predictor:
    """LearnerSpec에 따라 예측기 적합"""
    if spec.kind == "ols":
        return LinearPredictor(kind="ols", fit=fit_ols(design, y))
    if spec.kind == "ridge":
        return LinearPredictor(kind="ridge", fit=fit_ridge(design, y, spec.penalty))
    if spec.kind == "lasso":
        return LinearPredictor(kind="lasso", fit=fit_lasso(design, y, spec.penalty))
    if spec.kind == "logistic":
        return fit_logistic(design, y)
    if spec.kind == "forest":
        from .forest import ForestParams, fit_forest

        params = ForestParams(
            n_trees=spec.n_trees or settings.forest_n_trees,
            max_depth=settings.forest_max_depth if spec.max_depth is None else spec.max_depth,
            min_leaf=spec.min_leaf or settings.forest_min_leaf,
            mtry=spec.mtry,
            seed=seed,
            bootstrap=spec.bootstrap,
        )
        return fit_forest(design, y, params)
    raise DataValidationError("fit_learner", f"learner kind '{spec.kind}' cannot be fitted", {"kind": spec.kind})


def learner_metadata(spec: LearnerSpec, n_features: int) -> dict:
    """결과 메타데이터에 남길 학습기 설정 (기본값 포함)"""
    record = {"kind": spec.kind}
    if spec.kind in ("lasso", "ridge"):
        record["penalty"] = spec.penalty
    if spec.kind == "forest":
        record.update({
            "n_trees": spec.n_trees or settings.forest_n_trees,
            "max_depth": settings.forest_max_depth if spec.max_depth is None else spec.max_depth,
            "min_leaf": spec.min_leaf or settings.forest_min_leaf,
            "mtry": spec.mtry or max(1, -(-n_features // 3)),
            "bootstrap": spec.bootstrap,
        })
    if spec.features is not None:
        record["features"] = list(spec.features)
    if spec.kind == "column":
        record["column"] = spec.column
    return record


@dataclass(frozen=True)
class CrossFitResult:
    """폴드 외 예측값과 폴드 배정"""
    predictions: np.ndarray
    folds: np.ndarray


def cross_fit(
    learner: LearnerSpec,
    design,
    y,
    k: int,
    seed: int,
    row_keys: Optional[Sequence[int]] = None,
    allow_single: bool = False,
) -> CrossFitResult:
    """
    교차적합

    Args:
        learner: 예측기 선언
        design: (n, p) 설계행렬
        y: 반응
        k: 폴드 수 (2 ≤ k ≤ n, allow_single이면 k=1 분할 없는 비교 모드)
        seed: 폴드 배정 및 폴드별 학습기 시드
        row_keys: 폴드 배정 키 (기본: 행 번호)

    Returns:
        CrossFitResult (행 i의 예측은 i가 속하지 않은 폴드로 적합한 모형에서 나온다)
    """
    y = np.asarray(y, dtype=np.float64)
    matrix = as_design(design, len(y))
    n = len(y)
    if k > n:
        raise DataValidationError("cross_fit", f"fold count {k} exceeds rows {n}", {"k": k, "n": n})
    if k == 1 and allow_single:
        model = fit_learner(learner, matrix, y, derive_seed(seed, 0))
        return CrossFitResult(predictions=model.predict(matrix), folds=np.zeros(n, dtype=np.int64))
    if k < 2:
        raise DataValidationError("cross_fit", "fold count must be at least 2", {"k": k})

    folds = assign_folds(n, k, seed, row_keys)
    predictions = np.empty(n)
    for fold in range(k):
        held_out = folds == fold
        model = fit_learner(learner, matrix[~held_out], y[~held_out], derive_seed(seed, fold))
        predictions[held_out] = model.predict(matrix[held_out])
    logger.debug(f"교차적합 완료: {learner.kind}, k={k}, n={n}")
    return CrossFitResult(predictions=predictions, folds=folds)
