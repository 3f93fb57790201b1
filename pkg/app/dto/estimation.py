from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .dataset import DatasetPayload

# 95% 정규 신뢰구간 분위수
Z_95 = 1.959964


def to_plain(value: Any) -> Any:
    """numpy 값을 JSON 직렬화 가능한 파이썬 값으로 변환"""
    if isinstance(value, dict):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Enum):
        return value.value
    return value


class Estimand(str, Enum):
    """추정 대상"""
    ATE = "ATE"
    ATT = "ATT"
    LATE = "LATE"
    NAIVE = "naive"


class LearnerSpec(BaseModel):
    """
    예측기 선언

    kind가 column이면 적합 없이 데이터셋의 해당 열을 그대로 예측값으로 쓴다 (알려진 성향점수 등).
    features를 주면 공변량 대신 그 열들만으로 설계행렬을 만든다 (의도적 오지정 실험용).
    """
    model_config = ConfigDict(extra="forbid")

    kind: Literal["ols", "ridge", "lasso", "logistic", "forest", "column"] = Field("ols", description="예측기 종류")
    penalty: float = Field(0.0, ge=0.0, description="lasso λ 또는 ridge α")
    n_trees: Optional[int] = Field(None, ge=1, description="포레스트 트리 수")
    max_depth: Optional[int] = Field(None, ge=0, description="트리 최대 깊이")
    min_leaf: Optional[int] = Field(None, ge=1, description="리프 최소 관측치 수")
    mtry: Optional[int] = Field(None, ge=1, description="분할 후보 특성 수 (기본 ⌈p/3⌉)")
    bootstrap: bool = Field(True, description="트리별 부트스트랩 표본 사용")
    features: Optional[List[str]] = Field(None, description="설계행렬에 사용할 열 (기본: 공변량)")
    column: Optional[str] = Field(None, description="kind=column일 때 예측값 열")


class EstimateResult(BaseModel):
    """모든 추정기의 공통 결과 레코드"""
    estimand: Estimand = Field(..., description="추정 대상")
    estimate: float = Field(..., description="점추정치")
    std_err: float = Field(..., ge=0.0, description="표준오차")
    ci_low: float = Field(..., description="95% 신뢰구간 하한")
    ci_high: float = Field(..., description="95% 신뢰구간 상한")
    n_used: int = Field(..., ge=0, description="사용된 행 수")
    method: str = Field(..., description="추정 방법 이름")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="방법별 부가 정보")

    @field_validator("metadata", mode="before")
    @classmethod
    def _plain_metadata(cls, value: Any) -> Any:
        return to_plain(value or {})

    @classmethod
    def normal(
        cls,
        estimand: Estimand,
        estimate: float,
        std_err: float,
        n_used: int,
        method: str,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "EstimateResult":
        """정규 근사 95% 구간으로 결과 생성"""
        estimate = float(estimate)
        std_err = float(std_err)
        half_width = Z_95 * std_err
        return cls(
            estimand=estimand,
            estimate=estimate,
            std_err=std_err,
            ci_low=estimate - half_width,
            ci_high=estimate + half_width,
            n_used=int(n_used),
            method=method,
            metadata=metadata or {},
        )


class WeightVector(BaseModel):
    """역확률 가중치"""
    weights: List[float] = Field(..., description="행별 가중치")
    stabilized: bool = Field(False, description="안정화 가중치 여부")
    trim_bounds: Optional[Tuple[float, float]] = Field(None, description="성향점수 절단 구간")

    def arm_means(self, treatment: List[float]) -> Tuple[float, float]:
        weights = np.asarray(self.weights)
        d = np.asarray(treatment)
        return float(weights[d == 0].mean()), float(weights[d == 1].mean())


class MethodOptions(BaseModel):
    """CLI/HTTP/몬테카를로에서 추정기로 전달되는 옵션"""
    model_config = ConfigDict(extra="forbid")

    covariates: Optional[List[str]] = Field(None, description="보정 공변량 (기본: 데이터셋 공변량 역할)")
    instruments: Optional[List[str]] = Field(None, description="도구변수 (기본: 데이터셋 도구변수 역할)")
    ps_model: LearnerSpec = Field(default_factory=lambda: LearnerSpec(kind="logistic"), description="성향점수 모형")
    outcome_model: LearnerSpec = Field(default_factory=lambda: LearnerSpec(kind="ols"), description="결과 모형")
    learner: LearnerSpec = Field(default_factory=lambda: LearnerSpec(kind="forest"), description="DML 장애모수 학습기")
    k_folds: Optional[int] = Field(None, ge=1, description="교차적합 폴드 수")
    comparison_mode: bool = Field(False, description="k_folds=1 (분할 없음) 비교 모드 허용")
    stabilize: bool = Field(False, description="안정화 가중치")
    trim: Optional[Tuple[float, float]] = Field(None, description="성향점수 절단 구간")
    horvitz_thompson: bool = Field(False, description="Hájek 대신 Horvitz-Thompson 추정")
    iptw_estimand: Literal["ATE", "ATT"] = Field("ATE", description="IPTW 추정 대상")
    variance: Literal["sandwich", "bootstrap"] = Field("sandwich", description="IPTW 분산 추정 방식")
    lasso_lambda: Optional[float] = Field(None, ge=0.0, description="Post-LASSO 벌점")
    first_stage_link: Literal["linear", "logistic"] = Field("linear", description="1단계 연결함수")
    split_cross_fit: bool = Field(True, description="표본분할 IV에서 두 절반을 교대로 사용")


class EstimateRequestDTO(BaseModel):
    """추정 API 요청"""
    data: DatasetPayload = Field(..., description="데이터셋")
    method: str = Field(..., description="추정 방법 (all 포함)")
    options: MethodOptions = Field(default_factory=MethodOptions, description="추정 옵션")
    seed: int = Field(0, description="난수 시드")


class PoolRequestDTO(BaseModel):
    """Rubin 결합 API 요청"""
    results: List[EstimateResult] = Field(..., description="결합할 결과 목록")

