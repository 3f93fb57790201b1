from typing import List, Optional

from pydantic import BaseModel, Field

from .dataset import DatasetPayload
from .estimation import LearnerSpec


class BalanceRow(BaseModel):
    """공변량별 집단 간 균형"""
    covariate: str = Field(..., description="공변량 이름")
    mean_0: float = Field(..., description="집단 0 평균")
    mean_1: float = Field(..., description="집단 1 평균")
    pooled_sd: float = Field(..., ge=0.0, description="sqrt((s0² + s1²)/2), n-1 분모")
    smd: float = Field(..., ge=0.0, description="|mean_1 - mean_0| / pooled_sd")
    zero_variance: bool = Field(False, description="두 집단 모두 분산 0이면 SMD 0으로 보고")


class BalanceTable(BaseModel):
    """표준화 평균 차이 표"""
    group: str = Field(..., description="집단을 나누는 이진 열")
    rows: List[BalanceRow] = Field(default_factory=list)


class FirstStageFReport(BaseModel):
    """1단계 도구변수 결합 유의성 F"""
    f: float = Field(..., description="F 통계량 (완전 적합이면 +inf)")
    df1: int = Field(..., description="분자 자유도 (도구변수 수)")
    df2: int = Field(..., description="분모 자유도")
    p: float = Field(..., description="p-값")
    infinite: bool = Field(False, description="완전 적합으로 F가 발산")
    robust: bool = Field(False, description="HC0 Wald 형태 여부")


class SarganReport(BaseModel):
    """과대식별 검정"""
    j: float = Field(..., ge=0.0, description="n·R²")
    df: int = Field(..., ge=0, description="도구변수 수 - 내생변수 수")
    p: Optional[float] = Field(None, description="카이제곱 p-값 (df = 0이면 생략)")
    flag: Optional[str] = Field(None, description="not applicable 등")


class PositivityReport(BaseModel):
    """성향점수 겹침(공통 지지) 요약"""
    n: int = Field(..., description="행 수")
    min: float = Field(..., description="최소 성향점수")
    max: float = Field(..., description="최대 성향점수")
    below_001: int = Field(0, description="p < 0.01 개수")
    below_005: int = Field(0, description="p < 0.05 개수")
    above_095: int = Field(0, description="p > 0.95 개수")
    above_099: int = Field(0, description="p > 0.99 개수")
    extreme_weight_count: int = Field(0, description="max(1/p, 1/(1-p)) > 10 개수")


class BiasInterval(BaseModel):
    """부트스트랩 백분위 구간"""
    low: float
    high: float


class BiasRatioReport(BaseModel):
    """누락 교란 변수에 대한 OLS/2SLS 편향과 그 비율"""
    bias_ols: float = Field(..., description="beta2·(mean(X|D=1) - mean(X|D=0))")
    bias_tsls: float = Field(..., description="beta2·(mean(X|Z=1) - mean(X|Z=0)) / 1단계 대비")
    ratio: Optional[float] = Field(None, description="|bias_tsls| / |bias_ols| (bias_ols = 0이면 생략)")
    flags: List[str] = Field(default_factory=list, description="2SLS more sensitive 등")
    bootstrap_reps: int = Field(0, description="부트스트랩 재표본 수 (0이면 생략)")
    ratio_interval: Optional[BiasInterval] = Field(None, description="비율 95% 백분위 구간")
    bias_ols_interval: Optional[BiasInterval] = Field(None)
    bias_tsls_interval: Optional[BiasInterval] = Field(None)


class EpvReport(BaseModel):
    """모수당 사건 수"""
    events: int = Field(..., description="작은 처치군 크기")
    n_parameters: int = Field(..., ge=1, description="모형 모수 수")
    epv: float = Field(..., description="events / n_parameters")
    flags: List[str] = Field(default_factory=list)


class OrthogonalityProbe(BaseModel):
    """장애모수 섭동에 대한 모멘트 민감도"""
    theta: float = Field(..., description="섭동 전 DML 추정치")
    deltas: List[float] = Field(..., description="평가한 δ (0 포함)")
    moment_values: List[float] = Field(..., description="직교 모멘트 값")
    naive_moment_values: List[float] = Field(..., description="비직교 모멘트 값")
    linear: float = Field(..., description="직교 모멘트 1차 계수")
    quadratic: float = Field(..., description="직교 모멘트 2차 계수")
    naive_linear: float = Field(..., description="비직교 모멘트 1차 계수")
    naive_quadratic: float = Field(..., description="비직교 모멘트 2차 계수")
    passes: bool = Field(..., description="|linear| < 0.1·|quadratic|·max δ")
    naive_passes: bool = Field(..., description="|naive_linear| < 0.1·|quadratic|·max δ (비직교 모멘트는 실패해야 정상)")


class DiagnosticsReport(BaseModel):
    """진단 묶음"""
    balance_by_treatment: Optional[BalanceTable] = None
    balance_by_instrument: List[BalanceTable] = Field(default_factory=list)
    first_stage: Optional[FirstStageFReport] = None
    first_stage_robust: Optional[FirstStageFReport] = None
    sargan: Optional[SarganReport] = None
    overlap: Optional[PositivityReport] = None
    bias_ratio: Optional[BiasRatioReport] = None
    epv: Optional[EpvReport] = None
    orthogonality: Optional[OrthogonalityProbe] = None
    notes: List[str] = Field(default_factory=list, description="계산하지 못한 진단과 사유")


class DiagnoseRequestDTO(BaseModel):
    """진단 API 요청"""
    data: DatasetPayload = Field(..., description="데이터셋")
    covariates: Optional[List[str]] = Field(None, description="공변량 (기본: 공변량 역할)")
    instruments: Optional[List[str]] = Field(None, description="도구변수 (기본: 도구변수 역할)")
    ps_model: LearnerSpec = Field(default_factory=lambda: LearnerSpec(kind="logistic"), description="겹침 진단용 성향점수 모형")
    omitted: Optional[str] = Field(None, description="편향 비율용 누락 교란 열")
    beta2: Optional[float] = Field(None, description="누락 교란의 결과 계수")
    bootstrap_reps: int = Field(0, ge=0, description="편향 비율 부트스트랩 재표본 수")
    orthogonality_learner: Optional[LearnerSpec] = Field(None, description="지정 시 이 학습기로 DML 직교성 확인")
    k_folds: Optional[int] = Field(None, ge=2, description="직교성 확인 교차적합 폴드 수")
    seed: int = Field(0, description="난수 시드")
