"""
구조적 인과모형 시뮬레이터

선형 구조방정식으로 합성 데이터셋을 만들고, 잠재결과 열로 정확한 오라클 추정 대상과
프로브 표본 기반 편향 예측을 계산한다.

난수 배정:
- Philox 원시 출력을 (행, 열) 격자에 1:1로 배정하므로 i번째 행의 값은 n과 무관하다
- 정규 난수는 균등 난수의 역CDF 변환
"""

import logging
import math
from typing import Dict, List, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from ..dto.simulation import OracleReport, ScmSpec, StrataCounts, TheoryPrediction
from ..errors import DataValidationError
from ..models.dataset import Dataset, Role
from .learners import fit_ols
from .random_streams import derive_seed, make_rng

logger = logging.getLogger(__name__)

SIMULATION_STREAM_KEY = 0x5C11
PROBE_STREAM_KEY = 0x9B0B

# 선형확률모형 처치확률 절단 구간
LPM_CLIP = (0.01, 0.99)

# |Cov(Z, D)|가 이보다 작으면 무관한 도구변수
IRRELEVANCE_TOLERANCE = 1e-8


def _check_finite(spec: ScmSpec) -> None:
    values: List[float] = [spec.gamma0, spec.gamma_u, spec.tau_sd, spec.beta0, spec.beta_d, spec.beta_u, spec.epsilon_sd]
    values += spec.gamma_x + spec.gamma_z + spec.beta_x + spec.delta_vector() + spec.rho_vector()
    if spec.hetero is not None:
        values += [spec.hetero.scale, spec.hetero.u_weight] + spec.hetero_x_weights()
    if spec.mediator is not None:
        values += [spec.mediator.b1, spec.mediator.b2, spec.mediator.b3, spec.mediator.noise_sd]
    if not all(math.isfinite(value) for value in values):
        raise DataValidationError("simulate", "non-finite parameter in spec")


def _uniform_grid(seed: int, n: int, width: int) -> np.ndarray:
    """(n, width) 균등 난수, 각 칸은 고정된 카운터 위치에 대응"""
    bit_generator = make_rng(seed, SIMULATION_STREAM_KEY).bit_generator
    raw = bit_generator.random_raw(n * width).reshape(n, width)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def simulate(spec: ScmSpec, n: int, seed: int) -> Dataset:
    """
    구조방정식에서 데이터셋 생성

    Args:
        spec: 구조방정식 설정
        n: 행 수 (≥ 2)
        seed: 난수 시드

    Returns:
        X, Z, U, D, Y, Y(0), Y(1) (이진 도구변수면 D(0), D(1), 매개변수 있으면 W) 열을 가진 Dataset
    """
    if n < 2:
        raise DataValidationError("simulate", "n_rows ≥ 2 required", {"n": n})
    _check_finite(spec)

    k, j = spec.k_covariates, spec.j_instruments
    width = k + 1 + j + 4
    uniforms = _uniform_grid(seed, n, width)
    normals = ndtri(uniforms)

    x = normals[:, :k]
    u = normals[:, k]
    eta = normals[:, k + 1:k + 1 + j]
    nu = normals[:, k + 1 + j]
    epsilon = normals[:, k + 2 + j]
    omega = normals[:, k + 3 + j]
    v = uniforms[:, k + 4 + j]

    rho = np.asarray(spec.rho_vector())
    z_star = rho * u[:, None] + np.sqrt(1.0 - rho ** 2) * eta
    binary_instruments = spec.instrument_law == "binary_balanced"
    z = (z_star > 0).astype(np.float64) if binary_instruments else z_star

    gamma_z = np.asarray(spec.gamma_z)
    base_index = spec.gamma0 + x @ np.asarray(spec.gamma_x) + spec.gamma_u * u

    def assign(index: np.ndarray) -> np.ndarray:
        if spec.treatment_mechanism == "latent_threshold":
            return (index + spec.tau_sd * nu > 0).astype(np.float64)
        return (v < np.clip(index, *LPM_CLIP)).astype(np.float64)

    d = assign(base_index + z @ gamma_z)

    unit_effect = np.full(n, spec.beta_d)
    if spec.hetero is not None:
        unit_effect = unit_effect + spec.hetero.scale * (x @ np.asarray(spec.hetero_x_weights()) + spec.hetero.u_weight * u)

    structural = spec.beta0 + x @ np.asarray(spec.beta_x) + spec.beta_u * u + z @ np.asarray(spec.delta_vector()) + spec.epsilon_sd * epsilon

    def potential_outcome(level: float) -> np.ndarray:
        outcome = structural + unit_effect * level
        if spec.mediator is not None:
            mediator = spec.mediator.b1 * level + spec.mediator.noise_sd * omega
            outcome = outcome + spec.mediator.b2 * mediator + spec.mediator.b3 * level
        return outcome

    y0 = potential_outcome(0.0)
    y1 = potential_outcome(1.0)
    y = np.where(d == 1.0, y1, y0)

    columns: Dict[str, np.ndarray] = {}
    roles: Dict[Role, List[str]] = {Role.OUTCOME: ["y"], Role.TREATMENT: ["d"]}
    covariate_names = [f"x{index + 1}" for index in range(k)]
    instrument_names = [f"z{index + 1}" for index in range(j)]
    for index, name in enumerate(covariate_names):
        columns[name] = x[:, index]
    for index, name in enumerate(instrument_names):
        columns[name] = z[:, index]
    columns["u"] = u
    columns["d"] = d
    columns["y"] = y
    columns["y0"] = y0
    columns["y1"] = y1
    roles[Role.COVARIATE] = covariate_names
    roles[Role.INSTRUMENT] = instrument_names
    roles[Role.HIDDEN_CONFOUNDER] = ["u"]
    roles[Role.POTENTIAL_OUTCOME_Y0] = ["y0"]
    roles[Role.POTENTIAL_OUTCOME_Y1] = ["y1"]

    if j >= 1 and binary_instruments:
        # 지정 도구변수(첫 번째)만 0/1로 바꾸고 같은 잡음으로 잠재처치 계산
        fixed = base_index + z[:, 1:] @ gamma_z[1:]
        columns["d0"] = assign(fixed)
        columns["d1"] = assign(fixed + gamma_z[0])
        roles[Role.POTENTIAL_TREATMENT_Z0] = ["d0"]
        roles[Role.POTENTIAL_TREATMENT_Z1] = ["d1"]

    if spec.mediator is not None:
        columns["w"] = spec.mediator.b1 * d + spec.mediator.noise_sd * omega
        roles[Role.MEDIATOR] = ["w"]

    mediated = 0.0 if spec.mediator is None else spec.mediator.b1 * spec.mediator.b2 + spec.mediator.b3
    columns["unit_effect"] = unit_effect + mediated

    propensity = _true_propensity(spec, base_index - spec.gamma_u * u + z @ gamma_z)
    if propensity is not None:
        columns["propensity"] = propensity

    logger.debug(f"시뮬레이션 완료: n={n}, seed={seed}, 처치 비율 {d.mean():.3f}")
    return Dataset(columns, roles)


def _true_propensity(spec: ScmSpec, observed_index: np.ndarray) -> Optional[np.ndarray]:
    """U와 잡음을 적분한 P(D=1 | X, Z); 닫힌 형태가 없으면 None"""
    if any(rho != 0.0 for rho in spec.rho_vector()):
        return None
    if spec.treatment_mechanism == "latent_threshold":
        spread = math.hypot(spec.tau_sd, spec.gamma_u)
        if spread == 0.0:
            return (observed_index > 0).astype(np.float64)
        return ndtr(observed_index / spread)
    if spec.gamma_u != 0.0:
        return None
    return np.clip(observed_index, *LPM_CLIP)


def oracle_effects(ds: Dataset, instrument: Optional[str] = None) -> OracleReport:
    """
    잠재결과 열로 ATE/ATT/LATE와 순응 유형 수를 계산

    LATE와 유형 수는 잠재처치 열이 있을 때만 계산한다.
    """
    y0_names = ds.role_columns(Role.POTENTIAL_OUTCOME_Y0)
    y1_names = ds.role_columns(Role.POTENTIAL_OUTCOME_Y1)
    if len(y0_names) != 1 or len(y1_names) != 1:
        raise DataValidationError("oracle_effects", "missing oracle columns: potential outcomes Y(0), Y(1)")
    d0_names = ds.role_columns(Role.POTENTIAL_TREATMENT_Z0)
    d1_names = ds.role_columns(Role.POTENTIAL_TREATMENT_Z1)
    if instrument is not None:
        values = ds.column(instrument)
        if not np.all((values == 0.0) | (values == 1.0)):
            raise DataValidationError("oracle_effects", f"instrument {instrument} is not binary")
        # 잠재처치 열은 첫 번째 도구변수를 0/1로 바꾼 값
        designated = ds.instruments[0] if ds.instruments else None
        if d0_names and instrument != designated:
            raise DataValidationError(
                "oracle_effects",
                f"potential treatments are defined for instrument {designated}, not {instrument}",
                {"instrument": instrument, "designated": designated},
            )

    effect = ds.column(y1_names[0]) - ds.column(y0_names[0])
    n = ds.n_rows
    treated = ds.d == 1.0
    report = {
        "n_rows": n,
        "ate": float(effect.mean()),
        "att": float(effect[treated].mean()) if treated.any() else None,
    }

    if d0_names and d1_names:
        d0 = ds.column(d0_names[0])
        d1 = ds.column(d1_names[0])
        compliers = (d0 == 0.0) & (d1 == 1.0)
        strata = StrataCounts(
            always_takers=int(np.sum((d0 == 1.0) & (d1 == 1.0))),
            compliers=int(np.sum(compliers)),
            defiers=int(np.sum((d0 == 1.0) & (d1 == 0.0))),
            never_takers=int(np.sum((d0 == 0.0) & (d1 == 0.0))),
        )
        report["strata_counts"] = strata
        report["complier_fraction"] = strata.compliers / n
        if compliers.any():
            report["late"] = float(effect[compliers].mean())
        else:
            logger.warning("순응자가 없어 LATE를 계산하지 않음")
    return OracleReport(**report)


def _covariance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((a - a.mean()) * (b - b.mean())))


def _correlation(covariance: float, variance_a: float, variance_b: float) -> Optional[float]:
    scale = math.sqrt(variance_a * variance_b)
    return covariance / scale if scale > 0 else None


class _StructuralError:
    """
    구조 오차 φ = β_U·U + δ·Z + (β_D,i - 평균 효과)·D + epsilon_sd·ε (+ b2·noise_sd·ω)

    ε와 매개 잡음은 D, Z, X와 독립이므로 공분산에 기여하지 않고 분산에만 더해진다.
    U 항은 대상 변수가 U와 독립으로 생성된 경우 0으로 둔다.
    """

    def __init__(self, spec: ScmSpec, probe: Dataset):
        self.beta_u = spec.beta_u
        self.u = probe.column("u")
        self.systematic: List[np.ndarray] = []
        delta = np.asarray(spec.delta_vector())
        if np.any(delta != 0.0):
            self.systematic.append(probe.matrix(probe.instruments) @ delta)
        if spec.hetero is not None:
            x = probe.matrix(probe.covariates)
            deviation = spec.hetero.scale * (x @ np.asarray(spec.hetero_x_weights()) + spec.hetero.u_weight * self.u)
            self.systematic.append(deviation * probe.d)
        self.noise_variance = spec.epsilon_sd ** 2
        if spec.mediator is not None:
            self.noise_variance += (spec.mediator.b2 * spec.mediator.noise_sd) ** 2

    def _confounding(self) -> np.ndarray:
        return self.beta_u * self.u

    def covariance(self, target: np.ndarray, independent_of_u: bool) -> float:
        total = 0.0
        if self.beta_u != 0.0 and not independent_of_u:
            total += _covariance(target, self._confounding())
        for part in self.systematic:
            total += _covariance(target, part)
        return total

    def variance(self) -> float:
        systematic = self._confounding() + sum(self.systematic, np.zeros_like(self.u))
        return _covariance(systematic, systematic) + self.noise_variance


def predicted_biases(spec: ScmSpec, n_probe: int, seed: int) -> TheoryPrediction:
    """
    새 프로브 표본에서 OLS 누락변수 편향과 2SLS 비일치성의 plug-in 예측

    생성 구조상 0인 공분산(gamma_u = 0이면 Cov(D,U), rho = 0이면 Cov(Z,U), 잡음 항)은
    표본값 대신 0을 사용하므로 타당한 도구변수와 비교란 설정의 예측은 정확히 0이다.
    """
    if n_probe < 1000:
        raise DataValidationError("predicted_biases", "n_probe must be at least 1000", {"n_probe": n_probe})
    probe = simulate(spec, n_probe, derive_seed(seed, PROBE_STREAM_KEY))
    flags: List[str] = []

    d = probe.d
    u = probe.column("u")
    x = probe.matrix(probe.covariates)
    z = probe.matrix(probe.instruments)
    rho = spec.rho_vector()
    instruments_exogenous = all(value == 0.0 for value in rho)
    d_exogenous = spec.gamma_u == 0.0 and instruments_exogenous

    variance_d = _covariance(d, d)
    if variance_d == 0 or d_exogenous:
        ols_bias = 0.0
    else:
        ols_bias = spec.beta_u * _covariance(d, u) / variance_d
    if variance_d == 0:
        flags.append("constant treatment")

    d_tilde = fit_ols(x, d).residuals if x.shape[1] else d - d.mean()
    variance_tilde = _covariance(d_tilde, d_tilde)
    if variance_tilde == 0 or d_exogenous:
        ols_bias_adjusted = 0.0
    else:
        ols_bias_adjusted = spec.beta_u * _covariance(d_tilde, u) / variance_tilde

    phi = _StructuralError(spec, probe)

    components: List[Optional[float]] = []
    for index in range(z.shape[1]):
        denominator = _covariance(z[:, index], d)
        if abs(denominator) < IRRELEVANCE_TOLERANCE:
            components.append(None)
        else:
            components.append(phi.covariance(z[:, index], rho[index] == 0.0) / denominator)

    prediction = {
        "n_probe": n_probe,
        "ols_bias": ols_bias,
        "ols_bias_adjusted": ols_bias_adjusted,
        "tsls_components": components,
    }
    if spec.mediator is not None:
        prediction["mediator_total_effect"] = spec.mediator.b1 * spec.mediator.b2 + spec.mediator.b3

    if z.shape[1] == 0:
        flags.append("no instruments")
    else:
        if z.shape[1] == 1:
            index = z[:, 0]
        else:
            # 여러 도구변수는 1단계 선형 지수를 하나의 결합 도구변수로 사용
            first_stage = fit_ols(np.column_stack([x, z]), d)
            index = first_stage.fitted
            if x.shape[1]:
                index = fit_ols(x, index).residuals
        denominator = _covariance(index, d)
        if abs(denominator) < IRRELEVANCE_TOLERANCE:
            flags.append("irrelevant instrument")
        else:
            covariance_z_phi = phi.covariance(index, instruments_exogenous)
            prediction["tsls_inconsistency"] = covariance_z_phi / denominator
            variance_phi = phi.variance()
            variance_index = _covariance(index, index)
            corr_d_phi = _correlation(phi.covariance(d, d_exogenous), variance_d, variance_phi)
            corr_z_d = _correlation(denominator, variance_index, variance_d)
            corr_z_phi = _correlation(covariance_z_phi, variance_index, variance_phi)
            prediction.update({
                "corr_d_phi": corr_d_phi,
                "corr_z_d": corr_z_d,
                "corr_z_phi": corr_z_phi,
                "sd_ratio_phi_d": math.sqrt(variance_phi / variance_d) if variance_d > 0 else None,
            })
            if None not in (corr_d_phi, corr_z_d, corr_z_phi):
                worse = abs(corr_d_phi) * abs(corr_z_d) < abs(corr_z_phi)
                prediction["tsls_worse_than_ols"] = worse
                if worse:
                    flags.append("2SLS more inconsistent than OLS")

    prediction["flags"] = flags
    logger.info(f"이론 예측 계산 완료: OLS 편향 {ols_bias:.4f}, 2SLS 비일치성 {prediction.get('tsls_inconsistency')}")
    return TheoryPrediction(**prediction)
