"""
처치효과 추정 API

1. 요청 데이터셋 검증 (역할, 결측, 이진 처치)
2. 이름으로 추정기 실행 (all이면 전체 방법 비교)
"""

import asyncio
import logging

from fastapi import APIRouter

from ..dto.estimation import EstimateRequestDTO
from ..errors import WorkbenchError
from ..repositories.dataset_repository import dataset_from_columns
from ..utils.method_registry import run_all, run_method
from ..utils.report_tables import envelope
from .processing import raise_step_failure, raise_unexpected

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/estimate")
async def estimate_effect(request: EstimateRequestDTO):
    """
    처치효과 추정

    method가 all이면 [{method, result, error}] 목록을, 아니면 EstimateResult 하나를 result에 담는다.
    """
    processing_results = {}
    try:
        logger.info(f"추정 요청 - 방법: {request.method}")
        ds = dataset_from_columns(request.data.columns, request.data.roles, source="request")
        processing_results["ingest"] = {"status": "success", "rows": ds.n_rows}

        if request.method == "all":
            entries = await asyncio.to_thread(run_all, ds, request.options, request.seed)
            failed = sum(1 for _, result, _ in entries if result is None)
            processing_results["estimate"] = {"status": "success", "methods": len(entries), "failed": failed}
            return envelope("estimate", [
                {"method": method, "result": result.model_dump() if result else None, "error": error}
                for method, result, error in entries
            ])

        result = await asyncio.to_thread(run_method, ds, request.method, request.options, request.seed)
        processing_results["estimate"] = {"status": "success", "method": result.method}
        logger.info(f"추정 완료 - {result.method}: {result.estimate:.4f} (SE {result.std_err:.4f})")
        return envelope("estimate", result)
    except WorkbenchError as e:
        raise_step_failure(e, processing_results)
    except Exception as e:
        raise_unexpected(e, "estimation", processing_results)
