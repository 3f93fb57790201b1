from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

YesNo = Literal["yes", "no"]


class AdvisorInput(BaseModel):
    """방법 선택 흐름도 답변 (결정에 쓰이지 않는 뒤쪽 답변은 생략 가능)"""
    model_config = ConfigDict(extra="forbid")

    unobserved_confounding: Optional[YesNo] = Field(None, description="주목할 만한 비관측 교란이 의심되는가")
    suitable_ivs: Optional[YesNo] = Field(None, description="적절한 도구변수가 있는가")
    late_useful: Optional[YesNo] = Field(None, description="LATE가 유용한 추정 대상인가")
    sample_size: Optional[Literal["low", "high"]] = Field(None, description="표본 크기")
    iv_strength_or_proportion: Optional[Literal["weak_or_extreme", "ok"]] = Field(
        None, description="도구변수 강도 또는 처치 비율")


class AdvisorStep(BaseModel):
    """흐름도에서 거친 결정 노드"""
    question: str
    answer: str


class AdvisorRecommendation(BaseModel):
    """흐름도 말단 추천과 경로"""
    recommendation: str = Field(..., description="추천 접근법")
    path: List[AdvisorStep] = Field(default_factory=list, description="거친 결정 노드와 답")
