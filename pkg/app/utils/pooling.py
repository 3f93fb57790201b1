"""
다중대체 결과 결합 (Rubin 규칙)
"""

import logging
from typing import Sequence

import numpy as np

from ..dto.estimation import EstimateResult
from ..errors import DataValidationError

logger = logging.getLogger(__name__)


def pool_rubin(results: Sequence[EstimateResult]) -> EstimateResult:
    """
    Rubin 규칙으로 추정치 결합

    총분산 T = W + (1 + 1/m)·B (W: 대체 내 분산 평균, B: 대체 간 분산, ddof=1)

    Args:
        results: 같은 방법/추정 대상의 결과 목록 (m ≥ 2)

    Returns:
        결합된 EstimateResult (metadata에 m, 분산 분해, Rubin 자유도)
    """
    if len(results) < 2:
        raise DataValidationError("pool_rubin", "need ≥ 2 results to pool", {"m": len(results)})
    labels = {(result.method, result.estimand) for result in results}
    if len(labels) > 1:
        raise DataValidationError(
            "pool_rubin", "heterogeneous estimands: all results must share method and estimand",
            {"labels": sorted(f"{method}/{estimand.value}" for method, estimand in labels)},
        )

    m = len(results)
    estimates = np.array([result.estimate for result in results])
    within = float(np.mean([result.std_err ** 2 for result in results]))
    between = float(estimates.var(ddof=1))
    total = within + (1.0 + 1.0 / m) * between
    pooled = float(estimates.mean())

    between_share = (1.0 + 1.0 / m) * between
    degrees = (m - 1) * (1.0 + within / between_share) ** 2 if between_share > 0 else None

    first = results[0]
    logger.info(f"Rubin 결합 완료: m={m}, 추정치={pooled:.4f}, W={within:.4g}, B={between:.4g}")
    return EstimateResult.normal(
        first.estimand, pooled, np.sqrt(total), min(result.n_used for result in results), first.method,
        {
            "pooled": True,
            "m": m,
            "within_variance": within,
            "between_variance": between,
            "total_variance": total,
            "degrees_of_freedom": degrees,
        },
    )
