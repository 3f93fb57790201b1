"""
공용 pytest 픽스처

TD1: z,d,y 8행 (y = 1 + 2d), TD2: x,d,y 8행 (y = d + x)
"""

import json
from pathlib import Path

import pytest

from app.dto.dataset import RoleAssignment
from app.dto.simulation import ScmSpec
from app.repositories.dataset_repository import ingest_csv

MOCK_DATA = Path(__file__).parent / "tests" / "mock_data"


@pytest.fixture
def mock_data() -> Path:
    return MOCK_DATA


@pytest.fixture
def td1():
    return ingest_csv(MOCK_DATA / "td1.csv", RoleAssignment(outcome="y", treatment="d", instruments=["z"]))


@pytest.fixture
def td2():
    return ingest_csv(MOCK_DATA / "td2.csv", RoleAssignment(outcome="y", treatment="d", covariates=["x"]))


@pytest.fixture
def valid_iv_spec() -> ScmSpec:
    return ScmSpec.model_validate(json.loads((MOCK_DATA / "spec_valid_iv.json").read_text(encoding="utf-8")))


@pytest.fixture
def confounded_spec() -> ScmSpec:
    return ScmSpec.model_validate(json.loads((MOCK_DATA / "spec_confounded_lpm.json").read_text(encoding="utf-8")))
