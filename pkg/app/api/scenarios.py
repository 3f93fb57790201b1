"""
몬테카를로 시나리오 API

반복들은 세마포어로 동시 실행 수를 제한해 실행되며, 요약은 반복 순서대로 집계된다.
"""

import logging
from typing import Optional

from fastapi import APIRouter, Query

from ..dto.scenario import ScenarioConfig
from ..errors import DataValidationError, WorkbenchError
from ..utils.mc_harness import compare_to_theory, run_scenario_async
from ..utils.method_registry import METHODS
from ..utils.report_tables import envelope
from .processing import raise_step_failure, raise_unexpected

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/run")
async def run_monte_carlo(
    config: ScenarioConfig,
    compare: bool = Query(False, description="이론 예측 비교 포함"),
    max_concurrent: Optional[int] = Query(None, ge=1, description="동시 실행 반복 수"),
):
    processing_results = {}
    try:
        unknown = [invocation.method for invocation in config.estimators if invocation.method not in METHODS]
        if unknown:
            raise DataValidationError("scenario_validation", f"unknown method: {unknown[0]}",
                                      {"methods": sorted(METHODS)})
        processing_results["scenario_validation"] = {"status": "success", "estimators": len(config.estimators)}

        summary = await run_scenario_async(config, max_concurrent)
        processing_results["monte_carlo"] = {
            "status": "success",
            "reps": summary.reps,
            "errors": sum(row.n_errors for row in summary.rows),
        }
        result = {"summary": summary.model_dump()}
        if compare:
            result["comparison"] = compare_to_theory(summary, config.spec, config).model_dump()
            processing_results["theory_comparison"] = {"status": "success"}
        return envelope("mc", result)
    except WorkbenchError as e:
        raise_step_failure(e, processing_results)
    except Exception as e:
        raise_unexpected(e, "monte carlo run", processing_results)
