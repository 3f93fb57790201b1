"""
방법 선택 흐름도

비관측 교란 → 도구변수 가용성 → LATE 유용성 → 표본 크기 → (작은 표본일 때) 도구변수 강도/처치 비율
순서로 묻고, 처음으로 결론이 나는 노드에서 멈춘다. 멈춘 뒤의 답변은 읽지 않는다.
"""

import logging
from typing import List

from ..dto.advising import AdvisorInput, AdvisorRecommendation, AdvisorStep
from ..errors import DataValidationError

logger = logging.getLogger(__name__)

CONFOUNDER_APPROACH = "Confounder Approach"
IV_STRONG = "IV Approach: 2SLS with strong IVs"
IV_FLEXIBLE = "IV Approach: 2SLS or ML methods with weak or strong IVs"

QUESTIONS = {
    "unobserved_confounding": "Notable hypothesized unobserved confounding?",
    "suitable_ivs": "Availability of suitable IVs?",
    "late_useful": "Is the LATE a useful estimand?",
    "sample_size": "Sample size?",
    "iv_strength_or_proportion": "Weak IVs and/or extreme treatment proportion?",
}


def advise(answers: AdvisorInput) -> AdvisorRecommendation:
    """흐름도를 따라 추천 접근법과 경로를 반환 (필요한 답변이 없으면 incomplete input 오류)"""
    path: List[AdvisorStep] = []

    def ask(field: str) -> str:
        value = getattr(answers, field)
        if value is None:
            raise DataValidationError("advise", f"incomplete input: {field} is required at this point",
                                      {"missing": field, "path": [step.model_dump() for step in path]})
        path.append(AdvisorStep(question=QUESTIONS[field], answer=value))
        return value

    def finish(recommendation: str) -> AdvisorRecommendation:
        logger.info(f"방법 추천: {recommendation} ({len(path)}단계)")
        return AdvisorRecommendation(recommendation=recommendation, path=path)

    if ask("unobserved_confounding") == "no":
        return finish(CONFOUNDER_APPROACH)
    if ask("suitable_ivs") == "no":
        return finish(CONFOUNDER_APPROACH)
    if ask("late_useful") == "no":
        return finish(CONFOUNDER_APPROACH)
    if ask("sample_size") == "high":
        return finish(IV_FLEXIBLE)
    # 작은 표본 + 약한 도구변수/극단 처치 비율 노드는 교란 보정 접근으로 끝난다
    if ask("iv_strength_or_proportion") == "weak_or_extreme":
        return finish(CONFOUNDER_APPROACH)
    return finish(IV_STRONG)
