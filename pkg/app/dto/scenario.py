from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from .estimation import MethodOptions
from .simulation import ScmSpec, TheoryPrediction


class EstimatorInvocation(BaseModel):
    """시나리오에서 실행할 추정기와 옵션"""
    model_config = ConfigDict(extra="forbid")

    method: str = Field(..., description="추정 방법 이름 (CLI --method 와 동일)")
    label: Optional[str] = Field(None, description="요약 행 이름 (기본: method)")
    options: MethodOptions = Field(default_factory=MethodOptions, description="추정 옵션")

    @property
    def name(self) -> str:
        return self.label or self.method


class ScenarioConfig(BaseModel):
    """몬테카를로 시나리오 설정"""
    model_config = ConfigDict(extra="forbid")

    spec: ScmSpec = Field(..., description="구조방정식 설정")
    n: int = Field(..., ge=2, description="반복당 행 수")
    reps: int = Field(..., ge=1, description="반복 수")
    seed: int = Field(0, description="시나리오 시드 (반복 r의 시드는 (seed, r)에서 파생)")
    estimators: List[EstimatorInvocation] = Field(..., min_length=1, description="추정기 목록")
    target: Literal["ate", "late"] = Field("ate", description="편향 기준 오라클 추정 대상")
    instrument: Optional[str] = Field(None, description="오라클 LATE 기준 도구변수")
    n_probe: Optional[int] = Field(None, ge=1000, description="이론 예측 프로브 표본 크기")


class EstimatorSummary(BaseModel):
    """추정기별 성능 요약 (실패한 반복은 집계에서 제외하고 개수만 기록)"""
    label: str
    method: str
    estimand: Optional[str] = None
    n_success: int = 0
    n_errors: int = 0
    error_messages: List[str] = Field(default_factory=list, description="서로 다른 오류 메시지")
    mean_estimate: Optional[float] = None
    median_estimate: Optional[float] = None
    mean_target: Optional[float] = None
    mean_bias: Optional[float] = None
    empirical_sd: Optional[float] = Field(None, description="오차(추정치 - 반복별 오라클)의 표준편차, ddof=0")
    mcse_bias: Optional[float] = Field(None, description="empirical_sd / sqrt(n_success)")
    mean_std_err: Optional[float] = None
    rmse: Optional[float] = None
    coverage: Optional[float] = Field(None, ge=0.0, le=1.0, description="95% 구간이 오라클을 포함한 비율")
    rejection_rate: Optional[float] = Field(None, ge=0.0, le=1.0, description="|추정치/표준오차| > 1.959964 비율")


class OracleMeans(BaseModel):
    """반복별 오라클 값의 평균"""
    ate: Optional[float] = None
    att: Optional[float] = None
    late: Optional[float] = None
    complier_fraction: Optional[float] = None
    reps_without_target: int = Field(0, description="목표 오라클을 계산할 수 없던 반복 수")


class McSummary(BaseModel):
    """시나리오 결과 요약"""
    spec_fingerprint: str
    n: int
    reps: int
    seed: int
    target: str
    rows: List[EstimatorSummary]
    oracle: OracleMeans
    theory: Optional[TheoryPrediction] = None


class TheoryComparisonRow(BaseModel):
    label: str
    method: str
    quantity: Optional[str] = Field(None, description="비교한 이론 예측 항목")
    empirical_bias: Optional[float] = None
    predicted_bias: Optional[float] = None
    mcse: Optional[float] = None
    z: Optional[float] = None
    within_tolerance: Optional[bool] = Field(None, description="|z| < 3")


class TheoryComparison(BaseModel):
    spec_fingerprint: str
    rows: List[TheoryComparisonRow]
