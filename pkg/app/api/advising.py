"""방법 선택 흐름도 API"""

import logging

from fastapi import APIRouter

from ..dto.advising import AdvisorInput
from ..errors import WorkbenchError
from ..utils.advisor import advise
from ..utils.report_tables import envelope
from .processing import raise_step_failure, raise_unexpected

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/advise")
async def advise_method(answers: AdvisorInput):
    processing_results = {}
    try:
        advice = advise(answers)
        processing_results["advise"] = {"status": "success", "steps": len(advice.path)}
        return envelope("advise", advice)
    except WorkbenchError as e:
        raise_step_failure(e, processing_results)
    except Exception as e:
        raise_unexpected(e, "advising", processing_results)
