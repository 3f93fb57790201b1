"""
데이터셋 파일 리포지토리
pandas를 사용한 CSV 적재/저장과 원자적 파일 쓰기 기능
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError

from ..dto.dataset import RoleAssignment
from ..errors import DataValidationError
from ..models.dataset import Dataset, validate_roles

logger = logging.getLogger(__name__)

# 결측으로 간주하는 셀 텍스트 (소문자 비교)
MISSING_TOKENS = ("", "na", "nan", "null", "none")

# 검증 실패 항목 → 오류 메시지
FAILURE_MESSAGES = {
    "binary treatment": "non-binary treatment",
    "no missing values": "missing value",
}


def _parse_column(name: str, cells: pd.Series) -> np.ndarray:
    """문자열 셀을 로케일 무관하게 float64로 변환"""
    stripped = cells.astype(str).str.strip()
    missing = stripped.str.lower().isin(MISSING_TOKENS)
    if missing.any():
        row = int(np.flatnonzero(missing.to_numpy())[0])
        raise DataValidationError("ingest", f"missing value in column {name} at row {row + 1}",
                                  {"column": name, "row": row + 1})

    numeric = pd.to_numeric(stripped, errors="coerce").to_numpy(dtype=np.float64)
    invalid = ~np.isfinite(numeric)
    if invalid.any():
        row = int(np.flatnonzero(invalid)[0])
        raise DataValidationError("ingest", f"non-numeric cell in column {name} at row {row + 1}: {stripped.iloc[row]!r}",
                                  {"column": name, "row": row + 1, "cell": stripped.iloc[row]})

    # 최종 값은 파이썬의 정확 반올림 파서로 읽는다
    return np.array(stripped.tolist(), dtype=np.float64)


def dataset_from_columns(
    columns: Mapping[str, Union[Sequence[Any], pd.Series]],
    roles: RoleAssignment,
    source: str = "payload",
) -> Dataset:
    """열 매핑과 역할 지정으로 검증된 Dataset 생성"""
    for name in roles.referenced_columns():
        if name not in columns:
            raise DataValidationError("ingest", f"missing column: {name}", {"column": name, "source": source})

    parsed = {}
    for name, cells in columns.items():
        series = cells if isinstance(cells, pd.Series) else pd.Series(list(cells), dtype=object)
        parsed[name] = _parse_column(name, series)

    ds = Dataset(parsed, roles.to_role_map(), binary_treatment=roles.binary_treatment)
    report = validate_roles(ds)
    if not report.passed:
        failed = report.failures()
        first = next(check for check in report.checks if not check.passed)
        message = FAILURE_MESSAGES.get(first.name, first.name)
        raise DataValidationError("ingest", f"{message}: {first.message}", {"failed_checks": failed, "source": source})

    logger.info(f"데이터셋 적재 완료 ({source}): {ds.n_rows}행, {len(ds.column_names)}열")
    return ds


def ingest_csv(path: Union[str, Path], roles: RoleAssignment) -> Dataset:
    """
    CSV 파일을 읽어 검증된 Dataset으로 변환

    Args:
        path: 헤더가 있는 쉼표 구분 UTF-8 CSV 경로
        roles: 열 역할 지정

    Returns:
        검증을 통과한 Dataset
    """
    path = Path(path)
    if not path.is_file():
        raise DataValidationError("ingest", f"missing file: {path}", {"path": str(path)})

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except EmptyDataError:
        raise DataValidationError("ingest", f"header row missing: {path}", {"path": str(path)})
    except (ParserError, UnicodeDecodeError) as e:
        raise DataValidationError("ingest", f"malformed csv: {e}", {"path": str(path)})

    return dataset_from_columns({name: frame[name] for name in frame.columns}, roles, source=str(path))


def dataset_csv_text(ds: Dataset) -> str:
    """최단 왕복 표기(repr)로 CSV 텍스트 생성"""
    return ds.to_frame().to_csv(index=False, lineterminator="\n")


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """임시 파일에 쓴 뒤 rename하여 부분 파일이 남지 않도록 저장"""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def write_csv(ds: Dataset, path: Union[str, Path]) -> None:
    atomic_write_text(path, dataset_csv_text(ds))
    logger.info(f"CSV 저장 완료: {path} ({ds.n_rows}행)")


def load_json(path: Union[str, Path]) -> Any:
    """JSON 문서 로드 (파일 없음/형식 오류는 검증 오류)"""
    path = Path(path)
    if not path.is_file():
        raise DataValidationError("load_json", f"missing file: {path}", {"path": str(path)})
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataValidationError("load_json", f"malformed json: {e}", {"path": str(path)})
