"""
라우터 공통 오류 응답

단계 오류(WorkbenchError)는 422, 그 외 예외는 500으로 변환하며
processing_results에 단계별 처리 상태를 함께 담는다.
"""

import logging
from typing import Any, Dict, NoReturn

from fastapi import HTTPException, status

from ..errors import WorkbenchError
from ..utils.report_tables import json_ready

logger = logging.getLogger(__name__)


def raise_step_failure(e: WorkbenchError, processing_results: Dict[str, Any]) -> NoReturn:
    processing_results[e.step] = {
        "status": "failed",
        "error": e.message,
        "details": json_ready(e.details),
    }
    logger.error(f"{e.step} 실패: {e.message}")
    raise HTTPException(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        detail={
            "error": f"{e.step} failed",
            "message": e.message,
            "details": json_ready(e.details),
            "processing_results": processing_results,
        },
    )


def raise_unexpected(e: Exception, action: str, processing_results: Dict[str, Any]) -> NoReturn:
    logger.error(f"{action} 처리 중 예상치 못한 오류: {str(e)}")
    raise HTTPException(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        detail={
            "error": f"Unexpected error during {action}",
            "message": str(e),
            "processing_results": processing_results,
        },
    )
