"""
구조방정식 시뮬레이션 API

1. 설정 검증 (유한값, 길이 일치)
2. 시드 고정 데이터 생성
3. 잠재결과 열로 오라클 추정 대상 계산
"""

import asyncio
import logging

from fastapi import APIRouter

from ..config import settings
from ..dto.simulation import SimulateRequestDTO, SimulateResponseDTO
from ..errors import WorkbenchError
from ..utils.report_tables import envelope
from ..utils.scm_simulator import oracle_effects, predicted_biases, simulate
from .processing import raise_step_failure, raise_unexpected

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/simulate")
async def simulate_dataset(request: SimulateRequestDTO):
    """설정에서 데이터셋과 오라클 추정 대상 생성"""
    processing_results = {}
    try:
        logger.info(f"시뮬레이션 요청 - n={request.n}, seed={request.seed}")
        ds = await asyncio.to_thread(simulate, request.spec, request.n, request.seed)
        processing_results["simulate"] = {"status": "success", "rows": ds.n_rows}

        oracle = oracle_effects(ds, request.instrument)
        processing_results["oracle"] = {"status": "success", "ate": oracle.ate}

        response = SimulateResponseDTO(
            columns={name: values.tolist() for name, values in ds.columns.items()},
            roles={role.value: list(names) for role, names in ds.roles.items()},
            oracle=oracle,
        )
        return envelope("simulate", response)
    except WorkbenchError as e:
        raise_step_failure(e, processing_results)
    except Exception as e:
        raise_unexpected(e, "simulation", processing_results)


@router.post("/theory")
async def theory_prediction(request: SimulateRequestDTO):
    """프로브 표본으로 OLS 편향과 2SLS 비일치성 예측 (프로브 크기는 WORKBENCH_PROBE_N)"""
    processing_results = {}
    try:
        prediction = await asyncio.to_thread(predicted_biases, request.spec, settings.probe_n, request.seed)
        processing_results["theory"] = {"status": "success", "n_probe": prediction.n_probe}
        return envelope("theory", prediction)
    except WorkbenchError as e:
        raise_step_failure(e, processing_results)
    except Exception as e:
        raise_unexpected(e, "theory prediction", processing_results)
