"""Rubin 규칙 결합 API"""

import logging

from fastapi import APIRouter

from ..dto.estimation import PoolRequestDTO
from ..errors import WorkbenchError
from ..utils.pooling import pool_rubin
from ..utils.report_tables import envelope
from .processing import raise_step_failure, raise_unexpected

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/pool")
async def pool_results(request: PoolRequestDTO):
    processing_results = {}
    try:
        pooled = pool_rubin(request.results)
        processing_results["pool"] = {"status": "success", "m": len(request.results)}
        return envelope("pool", pooled)
    except WorkbenchError as e:
        raise_step_failure(e, processing_results)
    except Exception as e:
        raise_unexpected(e, "pooling", processing_results)
