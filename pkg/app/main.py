from fastapi import FastAPI
import logging
from dotenv import load_dotenv
from . import __version__
from .config import settings
from .api.simulating import router as simulating_router
from .api.estimating import router as estimating_router
from .api.diagnosing import router as diagnosing_router
from .api.scenarios import router as scenarios_router
from .api.pooling import router as pooling_router
from .api.advising import router as advising_router

# .env 파일 로드
load_dotenv()

# 로깅 설정
logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO))
logger = logging.getLogger(__name__)

app = FastAPI(
    title="Causal Effect Workbench API",
    version=__version__,
    description="관측 데이터 처치효과 추정 워크벤치"
)

app.include_router(simulating_router, prefix="/simulating", tags=["simulating"])
app.include_router(estimating_router, prefix="/estimating", tags=["estimating"])
app.include_router(diagnosing_router, prefix="/diagnosing", tags=["diagnosing"])
app.include_router(scenarios_router, prefix="/scenarios", tags=["scenarios"])
app.include_router(pooling_router, prefix="/pooling", tags=["pooling"])
app.include_router(advising_router, prefix="/advising", tags=["advising"])

@app.get("/health-check")
def health():
    """헬스체크 엔드포인트"""
    return {
        "status": "ok",
        "message": "Causal Effect Workbench API is running",
        "services": {
            "fastapi": "running"
        }
    }

@app.get("/")
def root():
    """루트 엔드포인트"""
    return {
        "name": "Causal Effect Workbench API",
        "version": __version__,
        "description": "교란 보정, 도구변수, DML/TMLE 추정과 몬테카를로 비교",
        "endpoints": {
            "rest_api": {
                "simulate": "/simulating/simulate",
                "theory": "/simulating/theory",
                "estimate": "/estimating/estimate",
                "diagnose": "/diagnosing/diagnose",
                "monte_carlo": "/scenarios/run",
                "pool": "/pooling/pool",
                "advise": "/advising/advise",
                "health": "/health-check"
            }
        }
    }
