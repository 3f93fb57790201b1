"""
환경 변수 기반 설정 모듈
.env 파일과 환경 변수에서 워크벤치 기본값을 읽어온다.
"""

import os
from pydantic import BaseModel, Field
from dotenv import load_dotenv

# 환경 변수 로드
load_dotenv()


class Settings(BaseModel):
    """워크벤치 실행 설정"""
    log_level: str = Field("INFO", description="로그 레벨")
    max_concurrent: int = Field(1, ge=1, description="몬테카를로 반복 동시 실행 수")
    forest_n_trees: int = Field(200, ge=1, description="랜덤 포레스트 트리 수")
    forest_max_depth: int = Field(6, ge=0, description="트리 최대 깊이")
    forest_min_leaf: int = Field(5, ge=1, description="리프 최소 관측치 수")
    bootstrap_reps: int = Field(500, ge=2, description="부트스트랩 재표본 수")
    probe_n: int = Field(20000, ge=1000, description="이론 편향 계산용 프로브 표본 크기")
    default_k_folds: int = Field(5, ge=1, description="교차적합 기본 폴드 수")
    post_lasso_lambda: float = Field(0.05, ge=0.0, description="Post-LASSO 기본 벌점")


def load_settings() -> Settings:
    """환경 변수에서 설정을 읽어 Settings 생성"""
    return Settings(
        log_level=os.getenv("WORKBENCH_LOG_LEVEL", "INFO"),
        max_concurrent=int(os.getenv("WORKBENCH_MAX_CONCURRENT", "1")),
        forest_n_trees=int(os.getenv("WORKBENCH_FOREST_N_TREES", "200")),
        forest_max_depth=int(os.getenv("WORKBENCH_FOREST_MAX_DEPTH", "6")),
        forest_min_leaf=int(os.getenv("WORKBENCH_FOREST_MIN_LEAF", "5")),
        bootstrap_reps=int(os.getenv("WORKBENCH_BOOTSTRAP_REPS", "500")),
        probe_n=int(os.getenv("WORKBENCH_PROBE_N", "20000")),
        default_k_folds=int(os.getenv("WORKBENCH_DEFAULT_K_FOLDS", "5")),
        post_lasso_lambda=float(os.getenv("WORKBENCH_POST_LASSO_LAMBDA", "0.05")),
    )


settings = load_settings()
