"""
워크벤치 공통 예외 정의

모든 처리 단계 오류는 WorkbenchError를 상속하며 어느 단계에서 실패했는지(step)를 함께 기록한다.
- DataValidationError: 입력/옵션/전제조건 위반 (CLI 종료코드 1)
- NumericalError: 랭크 부족, 분리, 무관한 도구변수 등 수치 계산 실패 (CLI 종료코드 2)
"""

from typing import Any, Dict, Optional


class WorkbenchError(Exception):
    """워크벤치 처리 오류"""
    exit_code = 2

    def __init__(self, step: str, message: str, details: Optional[Dict[str, Any]] = None):
        self.step = step
        self.message = message
        self.details = details or {}
        super().__init__(f"{step}: {message}")


class DataValidationError(WorkbenchError):
    """입력 데이터 또는 옵션 검증 오류"""
    exit_code = 1


class NumericalError(WorkbenchError):
    """수치 계산 실패"""
    exit_code = 2
