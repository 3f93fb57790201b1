"""
불변 데이터셋 모델

열 지향 실수 테이블과 열 역할(결과, 처치, 공변량, 도구변수, 오라클 전용 열)을 보관한다.
- 모든 열은 float64 배열로 저장되며 생성 후 쓰기가 막힌다.
- 역할 검증은 validate_roles()가 보고서 형태로 수행한다 (예외를 던지지 않음).
"""

from enum import Enum
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from ..errors import DataValidationError


class Role(str, Enum):
    """열 역할"""
    OUTCOME = "outcome"
    TREATMENT = "treatment"
    COVARIATE = "covariate"
    INSTRUMENT = "instrument"
    HIDDEN_CONFOUNDER = "hidden_confounder"
    POTENTIAL_OUTCOME_Y0 = "potential_outcome_y0"
    POTENTIAL_OUTCOME_Y1 = "potential_outcome_y1"
    POTENTIAL_TREATMENT_Z0 = "potential_treatment_z0"
    POTENTIAL_TREATMENT_Z1 = "potential_treatment_z1"
    MEDIATOR = "mediator"


# 0/1 값만 허용되는 역할
BINARY_ROLES = (Role.POTENTIAL_TREATMENT_Z0, Role.POTENTIAL_TREATMENT_Z1)


class ColumnRole(BaseModel):
    """열 이름과 역할 쌍"""
    name: str = Field(..., description="열 이름")
    role: Role = Field(..., description="열 역할")


class ValidationCheck(BaseModel):
    """단일 불변조건 검사 결과"""
    name: str = Field(..., description="검사 이름")
    passed: bool = Field(..., description="통과 여부")
    message: str = Field("", description="실패 사유")


class ValidationReport(BaseModel):
    """데이터셋 역할 검증 보고서"""
    checks: List[ValidationCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]


RoleInput = Mapping[Union[Role, str], Union[str, Sequence[str]]]


class Dataset:
    """역할이 선언된 불변 열 지향 데이터셋"""

    __slots__ = ("_columns", "_roles", "_binary_treatment")

    def __init__(
        self,
        columns: Mapping[str, Union[Sequence[float], np.ndarray]],
        roles: Optional[RoleInput] = None,
        binary_treatment: bool = True,
    ):
        frozen = {}
        for name, values in columns.items():
            array = np.array(values, dtype=np.float64)
            if array.ndim != 1:
                raise DataValidationError("dataset", f"column {name} is not one-dimensional")
            array.setflags(write=False)
            frozen[str(name)] = array
        self._columns = MappingProxyType(frozen)

        role_map: Dict[Role, Tuple[str, ...]] = {}
        for role, names in (roles or {}).items():
            if isinstance(names, str):
                names = [names]
            names = tuple(str(name) for name in names)
            if names:
                role_map[Role(role)] = names
        self._roles = MappingProxyType(role_map)
        self._binary_treatment = bool(binary_treatment)

    # 기본 속성
    @property
    def n_rows(self) -> int:
        for values in self._columns.values():
            return int(values.shape[0])
        return 0

    @property
    def columns(self) -> Mapping[str, np.ndarray]:
        return self._columns

    @property
    def column_names(self) -> List[str]:
        return list(self._columns.keys())

    @property
    def roles(self) -> Mapping[Role, Tuple[str, ...]]:
        return self._roles

    @property
    def binary_treatment(self) -> bool:
        return self._binary_treatment

    def column(self, name: str) -> np.ndarray:
        if name not in self._columns:
            raise DataValidationError("dataset", f"missing column: {name}", {"column": name})
        return self._columns[name]

    def has_column(self, name: str) -> bool:
        return name in self._columns

    def role_columns(self, role: Union[Role, str]) -> Tuple[str, ...]:
        return self._roles.get(Role(role), ())

    def column_roles(self) -> List[ColumnRole]:
        return [ColumnRole(name=name, role=role) for role, names in self._roles.items() for name in names]

    def role_of(self, name: str) -> Optional[Role]:
        for role, names in self._roles.items():
            if name in names:
                return role
        return None

    def _single(self, role: Role) -> str:
        names = self.role_columns(role)
        if len(names) != 1:
            raise DataValidationError("dataset", f"exactly one {role.value} column required", {"declared": list(names)})
        return names[0]

    @property
    def outcome_name(self) -> str:
        return self._single(Role.OUTCOME)

    @property
    def treatment_name(self) -> str:
        return self._single(Role.TREATMENT)

    @property
    def covariates(self) -> List[str]:
        return list(self.role_columns(Role.COVARIATE))

    @property
    def instruments(self) -> List[str]:
        return list(self.role_columns(Role.INSTRUMENT))

    @property
    def y(self) -> np.ndarray:
        return self.column(self.outcome_name)

    @property
    def d(self) -> np.ndarray:
        return self.column(self.treatment_name)

    def matrix(self, names: Iterable[str]) -> np.ndarray:
        """선택한 열을 (n_rows, len(names)) 행렬로 반환"""
        names = list(names)
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.column(name) for name in names])

    # 파생 데이터셋
    def with_columns(
        self,
        extra: Mapping[str, Union[Sequence[float], np.ndarray]],
        roles: Optional[RoleInput] = None,
    ) -> "Dataset":
        """열/역할을 덧붙인 새 데이터셋 (원본은 그대로)"""
        columns = dict(self._columns)
        columns.update(extra)
        role_map: Dict[Union[Role, str], Sequence[str]] = {role: list(names) for role, names in self._roles.items()}
        for role, names in (roles or {}).items():
            if isinstance(names, str):
                names = [names]
            role_map[Role(role)] = list(names)
        return Dataset(columns, role_map, self._binary_treatment)

    def subset(self, rows: Union[np.ndarray, Sequence[int]]) -> "Dataset":
        """행 인덱스(중복 허용)로 재구성한 데이터셋"""
        index = np.asarray(rows)
        return Dataset(
            {name: values[index] for name, values in self._columns.items()},
            dict(self._roles),
            self._binary_treatment,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: np.asarray(values) for name, values in self._columns.items()})

    def __repr__(self) -> str:
        roles = {role.value: list(names) for role, names in self._roles.items()}
        return f"Dataset(n_rows={self.n_rows}, columns={self.column_names}, roles={roles})"


def _is_binary(values: np.ndarray) -> bool:
    return bool(np.all((values == 0.0) | (values == 1.0)))


def validate_roles(ds: Dataset) -> ValidationReport:
    """
    데이터셋 불변조건을 검사해 보고서로 반환

    검사 항목: 행 수, 열 길이 일치, 결측 없음, 결과/처치 열 단일성, 역할 간 중복 없음,
    역할이 가리키는 열 존재, 이진 역할 값
    """
    checks: List[ValidationCheck] = []

    def record(name: str, passed: bool, message: str = "") -> None:
        checks.append(ValidationCheck(name=name, passed=passed, message="" if passed else message))

    n_rows = ds.n_rows
    record("n_rows ≥ 2", n_rows >= 2, f"dataset has {n_rows} rows")

    lengths = {name: int(values.shape[0]) for name, values in ds.columns.items()}
    uneven = [name for name, length in lengths.items() if length != n_rows]
    record("equal column lengths", not uneven, f"columns with a different length: {uneven}")

    missing = [name for name, values in ds.columns.items() if not np.all(np.isfinite(values))]
    record("no missing values", not missing, f"columns with missing or non-finite values: {missing}")

    outcomes = ds.role_columns(Role.OUTCOME)
    record("exactly one outcome", len(outcomes) == 1, f"declared outcome columns: {list(outcomes)}")
    treatments = ds.role_columns(Role.TREATMENT)
    record("exactly one treatment", len(treatments) == 1, f"declared treatment columns: {list(treatments)}")

    seen: Dict[str, Role] = {}
    duplicated = []
    for role, names in ds.roles.items():
        for name in names:
            if name in seen:
                duplicated.append(name)
            seen[name] = role
    record("disjoint roles", not duplicated, f"columns carrying more than one role: {sorted(set(duplicated))}")

    absent = sorted(name for name in seen if not ds.has_column(name))
    record("role columns present", not absent, f"roles reference absent columns: {absent}")

    binary_columns = list(treatments) if ds.binary_treatment else []
    for role in BINARY_ROLES:
        binary_columns.extend(ds.role_columns(role))
    non_binary = [name for name in binary_columns if ds.has_column(name) and not _is_binary(ds.column(name))]
    record("binary treatment", not non_binary, f"binary-role columns with values other than 0/1: {non_binary}")

    return ValidationReport(checks=checks)
