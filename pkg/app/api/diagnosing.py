"""진단 API"""

import asyncio
import logging

from fastapi import APIRouter

from ..dto.diagnostics import DiagnoseRequestDTO
from ..errors import WorkbenchError
from ..repositories.dataset_repository import dataset_from_columns
from ..utils.diagnostics import diagnose
from ..utils.report_tables import envelope
from .processing import raise_step_failure, raise_unexpected

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/diagnose")
async def diagnose_dataset(request: DiagnoseRequestDTO):
    processing_results = {}
    try:
        ds = dataset_from_columns(request.data.columns, request.data.roles, source="request")
        processing_results["ingest"] = {"status": "success", "rows": ds.n_rows}

        report = await asyncio.to_thread(
            diagnose, ds, request.covariates, request.instruments, request.ps_model,
            request.omitted, request.beta2, request.bootstrap_reps, request.seed,
            request.orthogonality_learner, request.k_folds,
        )
        processing_results["diagnose"] = {"status": "success", "notes": len(report.notes)}
        return envelope("diagnose", report)
    except WorkbenchError as e:
        raise_step_failure(e, processing_results)
    except Exception as e:
        raise_unexpected(e, "diagnostics", processing_results)
