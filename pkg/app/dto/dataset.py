from pydantic import BaseModel, Field
from typing import Dict, List, Optional

from ..models.dataset import Role


class RoleAssignment(BaseModel):
    """CLI 플래그/HTTP 요청으로 전달되는 열 역할 지정"""
    outcome: str = Field(..., description="결과 열")
    treatment: str = Field(..., description="처치 열")
    covariates: List[str] = Field(default_factory=list, description="관측 공변량 열")
    instruments: List[str] = Field(default_factory=list, description="도구변수 열")
    hidden_confounders: List[str] = Field(default_factory=list, description="오라클 전용 비관측 교란 열")
    mediators: List[str] = Field(default_factory=list, description="매개변수 열")
    potential_outcome_y0: Optional[str] = Field(None, description="잠재결과 Y(0) 열")
    potential_outcome_y1: Optional[str] = Field(None, description="잠재결과 Y(1) 열")
    potential_treatment_z0: Optional[str] = Field(None, description="잠재처치 D(0) 열")
    potential_treatment_z1: Optional[str] = Field(None, description="잠재처치 D(1) 열")
    binary_treatment: bool = Field(True, description="처치 열을 0/1로 검증할지 여부")

    def to_role_map(self) -> Dict[Role, List[str]]:
        role_map: Dict[Role, List[str]] = {
            Role.OUTCOME: [self.outcome],
            Role.TREATMENT: [self.treatment],
            Role.COVARIATE: list(self.covariates),
            Role.INSTRUMENT: list(self.instruments),
            Role.HIDDEN_CONFOUNDER: list(self.hidden_confounders),
            Role.MEDIATOR: list(self.mediators),
        }
        optional = {
            Role.POTENTIAL_OUTCOME_Y0: self.potential_outcome_y0,
            Role.POTENTIAL_OUTCOME_Y1: self.potential_outcome_y1,
            Role.POTENTIAL_TREATMENT_Z0: self.potential_treatment_z0,
            Role.POTENTIAL_TREATMENT_Z1: self.potential_treatment_z1,
        }
        for role, name in optional.items():
            if name:
                role_map[role] = [name]
        return {role: names for role, names in role_map.items() if names}

    def referenced_columns(self) -> List[str]:
        return [name for names in self.to_role_map().values() for name in names]


class DatasetPayload(BaseModel):
    """HTTP 요청용 열 지향 데이터셋"""
    columns: Dict[str, List[float]] = Field(..., description="열 이름 → 값 목록")
    roles: RoleAssignment = Field(..., description="열 역할 지정")
