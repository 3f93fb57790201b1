import hashlib
import json
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class HeterogeneityRule(BaseModel):
    """단위 효과 β_D,i = beta_d + scale·(x_weights·X_i + u_weight·U_i)"""
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    scale: float = Field(..., description="이질성 크기 h")
    x_weights: List[float] = Field(default_factory=list, description="공변량 가중치 (길이 k, 비우면 0)")
    u_weight: float = Field(0.0, description="비관측 교란 가중치")


class MediatorSpec(BaseModel):
    """D → W → Y 매개 경로: W = b1·D + noise_sd·ω, Y에 b2·W + b3·D 추가"""
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    b1: float = Field(..., description="D → W 계수")
    b2: float = Field(..., description="W → Y 계수")
    b3: float = Field(..., description="D → Y 직접효과 추가분")
    noise_sd: float = Field(0.0, ge=0.0, description="매개변수 잡음 크기")


class ScmSpec(BaseModel):
    """
    구조방정식 시뮬레이터 설정

    1단계: D* = gamma0 + X·gamma_x + Z·gamma_z + gamma_u·U (+ tau_sd·ν)
    2단계: Y = beta0 + β_D,i·D + X·beta_x + beta_u·U + Z·delta_z_to_y + epsilon_sd·ε
    X, U는 평균 0, 분산 1로 표준화되어 생성된다.
    """
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    k_covariates: int = Field(0, ge=0, description="관측 공변량 수 k")
    j_instruments: int = Field(0, ge=0, description="도구변수 수 j")
    gamma0: float = Field(0.0, description="1단계 절편")
    gamma_x: List[float] = Field(default_factory=list, description="1단계 공변량 계수 (길이 k)")
    gamma_z: List[float] = Field(default_factory=list, description="1단계 도구변수 계수 (길이 j)")
    gamma_u: float = Field(0.0, description="1단계 비관측 교란 계수")
    tau_sd: float = Field(1.0, ge=0.0, description="1단계 잡음 크기")
    beta0: float = Field(0.0, description="결과 절편")
    beta_d: float = Field(1.0, description="동질 처치효과")
    beta_x: List[float] = Field(default_factory=list, description="결과 공변량 계수 (길이 k)")
    beta_u: float = Field(0.0, description="결과 비관측 교란 계수")
    epsilon_sd: float = Field(1.0, ge=0.0, description="결과 잡음 크기")
    hetero: Optional[HeterogeneityRule] = Field(None, description="이질적 처치효과 규칙")
    delta_z_to_y: Optional[List[float]] = Field(None, description="Z → Y 직접효과 위반 (길이 j, 생략 시 0)")
    rho_z_u: Optional[List[float]] = Field(None, description="Z-U 상관 위반 (길이 j, 생략 시 0)")
    treatment_mechanism: Literal["latent_threshold", "bernoulli_lpm"] = Field("latent_threshold", description="처치 생성 방식")
    instrument_law: Literal["binary_balanced", "standard_gaussian"] = Field("binary_balanced", description="도구변수 분포")
    mediator: Optional[MediatorSpec] = Field(None, description="매개변수 설정")

    @model_validator(mode="after")
    def _check_lengths(self) -> "ScmSpec":
        k, j = self.k_covariates, self.j_instruments
        expected = {
            "gamma_x": (self.gamma_x, k),
            "beta_x": (self.beta_x, k),
            "gamma_z": (self.gamma_z, j),
            "delta_z_to_y": (self.delta_z_to_y, j),
            "rho_z_u": (self.rho_z_u, j),
        }
        if self.hetero is not None and self.hetero.x_weights:
            expected["hetero.x_weights"] = (self.hetero.x_weights, k)
        for name, (values, length) in expected.items():
            if values is not None and len(values) != length:
                raise ValueError(f"{name} has length {len(values)}, expected {length}")
        if any(abs(rho) >= 1.0 for rho in self.rho_vector()):
            raise ValueError("rho_z_u entries must satisfy |rho| < 1")
        return self

    def delta_vector(self) -> List[float]:
        return list(self.delta_z_to_y) if self.delta_z_to_y is not None else [0.0] * self.j_instruments

    def rho_vector(self) -> List[float]:
        return list(self.rho_z_u) if self.rho_z_u is not None else [0.0] * self.j_instruments

    def hetero_x_weights(self) -> List[float]:
        if self.hetero is None or not self.hetero.x_weights:
            return [0.0] * self.k_covariates
        return list(self.hetero.x_weights)

    def total_effect(self) -> float:
        """평균 단위효과 (이질성 항은 평균 0)"""
        effect = self.beta_d
        if self.mediator is not None:
            effect += self.mediator.b1 * self.mediator.b2 + self.mediator.b3
        return effect

    def fingerprint(self) -> str:
        """정규화 JSON의 sha256 (시나리오 요약과 설정의 대응 확인용)"""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class StrataCounts(BaseModel):
    """잠재처치 기준 하위집단 수"""
    always_takers: int = Field(0, ge=0)
    compliers: int = Field(0, ge=0)
    defiers: int = Field(0, ge=0)
    never_takers: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.always_takers + self.compliers + self.defiers + self.never_takers


class OracleReport(BaseModel):
    """잠재결과 열로 계산한 정확한 추정 대상"""
    n_rows: int = Field(..., description="행 수")
    ate: float = Field(..., description="평균 처치효과")
    att: Optional[float] = Field(None, description="처치군 평균 처치효과 (처치군 없으면 생략)")
    late: Optional[float] = Field(None, description="순응자 평균 처치효과 (순응자 없으면 생략)")
    strata_counts: Optional[StrataCounts] = Field(None, description="항상수용/순응/거역/비수용 수")
    complier_fraction: Optional[float] = Field(None, ge=0.0, le=1.0, description="순응자 비율")


class TheoryPrediction(BaseModel):
    """프로브 표본 기반 편향/비일치성 예측"""
    n_probe: int = Field(..., description="프로브 표본 크기")
    ols_bias: float = Field(..., description="β_U·Cov(D,U)/Var(D)")
    ols_bias_adjusted: float = Field(..., description="X를 제거한 D̃ 기준 β_U·Cov(D̃,U)/Var(D̃)")
    tsls_inconsistency: Optional[float] = Field(None, description="2SLS 비일치성 (도구변수 없거나 무관하면 생략)")
    tsls_components: List[Optional[float]] = Field(default_factory=list, description="도구변수별 Cov(Z_l,φ)/Cov(Z_l,D)")
    mediator_total_effect: Optional[float] = Field(None, description="b1·b2 + b3")
    corr_d_phi: Optional[float] = Field(None, description="Corr(D, φ)")
    corr_z_d: Optional[float] = Field(None, description="Corr(Z, D)")
    corr_z_phi: Optional[float] = Field(None, description="Corr(Z, φ)")
    sd_ratio_phi_d: Optional[float] = Field(None, description="σ_φ/σ_D")
    tsls_worse_than_ols: Optional[bool] = Field(None, description="|Corr(D,φ)|·|Corr(D,Z)| < |Corr(Z,φ)|")
    flags: List[str] = Field(default_factory=list, description="경고 플래그")


class SimulateRequestDTO(BaseModel):
    """시뮬레이션 API 요청"""
    spec: ScmSpec = Field(..., description="구조방정식 설정")
    n: int = Field(..., ge=2, description="행 수")
    seed: int = Field(0, description="난수 시드")
    instrument: Optional[str] = Field(None, description="오라클 LATE 계산용 도구변수")


class SimulateResponseDTO(BaseModel):
    """시뮬레이션 API 응답"""
    columns: Dict[str, List[float]] = Field(..., description="열 이름 → 값")
    roles: Dict[str, List[str]] = Field(..., description="역할 → 열 이름")
    oracle: OracleReport = Field(..., description="오라클 추정 대상")
