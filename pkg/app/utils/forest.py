"""
배깅 회귀 트리 (랜덤 포레스트)

- 분할 기준: 분산 감소 (SSE 감소량 최대)
- 동률은 낮은 특성 인덱스, 그다음 낮은 임계값 우선
- 트리 t의 부트스트랩/특성 추출은 (seed, t)로 파생된 스트림을 사용
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import DataValidationError
from .learners import Predictor, as_design
from .random_streams import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: int = 6
    min_leaf: int = 5
    mtry: Optional[int] = None
    seed: int = 0
    bootstrap: bool = True

    def resolved_mtry(self, n_features: int) -> int:
        if self.mtry is not None:
            return max(1, min(self.mtry, n_features))
        return max(1, math.ceil(n_features / 3))


@dataclass(frozen=True)
class RegressionTree:
    """배열로 펼친 이진 트리 (feature = -1 이면 리프)"""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, matrix: np.ndarray) -> np.ndarray:
        node = np.zeros(matrix.shape[0], dtype=np.intp)
        while True:
            feature = self.feature[node]
            rows = np.flatnonzero(feature >= 0)
            if rows.size == 0:
                break
            current = node[rows]
            go_left = matrix[rows, feature[rows]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
        return self.value[node]


def _best_split(matrix: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int) -> Optional[Tuple[int, float]]:
    n = len(y)
    total = float(y.sum())
    sizes = np.arange(1, n)
    # 수치 잡음 수준의 감소량은 분할로 보지 않는다
    best_gain = 1e-12 * max(1.0, float(y @ y))
    best: Optional[Tuple[int, float]] = None
    for feature in features:
        order = np.argsort(matrix[:, feature], kind="stable")
        values = matrix[order, feature]
        left_sum = np.cumsum(y[order])[:-1]
        right_sum = total - left_sum
        gain = left_sum ** 2 / sizes + right_sum ** 2 / (n - sizes) - total ** 2 / n
        valid = (values[:-1] < values[1:]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        position = int(np.argmax(gain))
        if gain[position] > best_gain:
            low, high = values[position], values[position + 1]
            threshold = low + (high - low) / 2.0
            if threshold >= high:
                threshold = low
            best_gain = float(gain[position])
            best = (int(feature), float(threshold))
    return best


def _grow_tree(matrix: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator) -> RegressionTree:
    n_features = matrix.shape[1]
    mtry = params.resolved_mtry(n_features) if n_features else 0
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []

    def build(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        if depth >= params.max_depth or rows.size < 2 * params.min_leaf or mtry == 0:
            return node
        candidates = np.sort(rng.choice(n_features, size=mtry, replace=False))
        split = _best_split(matrix[rows], y[rows], candidates, params.min_leaf)
        if split is None:
            return node
        split_feature, split_threshold = split
        goes_left = matrix[rows, split_feature] <= split_threshold
        feature[node] = split_feature
        threshold[node] = split_threshold
        left[node] = build(rows[goes_left], depth + 1)
        right[node] = build(rows[~goes_left], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return RegressionTree(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        value=np.asarray(value, dtype=np.float64),
    )


@dataclass(frozen=True)
class ForestPredictor(Predictor):
    trees: Tuple[RegressionTree, ...]
    params: ForestParams

    def predict(self, design) -> np.ndarray:
        matrix = as_design(design)
        total = np.zeros(matrix.shape[0])
        for tree in self.trees:
            total += tree.predict(matrix)
        return total / len(self.trees)


def fit_forest(design, y, params: ForestParams) -> ForestPredictor:
    """
    배깅 회귀 트리 적합

    Args:
        design: (n, p) 특성 행렬
        y: 반응
        params: 트리 수, 최대 깊이, 리프 최소 크기, mtry, 시드, 부트스트랩 여부

    Returns:
        트리 예측 평균을 내는 ForestPredictor
    """
    if params.n_trees < 1:
        raise DataValidationError("fit_forest", "n_trees must be at least 1", {"n_trees": params.n_trees})
    if params.min_leaf < 1:
        raise DataValidationError("fit_forest", "min_leaf must be at least 1", {"min_leaf": params.min_leaf})
    y = np.asarray(y, dtype=np.float64)
    matrix = as_design(design, len(y))
    n = len(y)
    if n < 1:
        raise DataValidationError("fit_forest", "need at least 1 row")

    trees = []
    for index in range(params.n_trees):
        rng = make_rng(params.seed, index)
        rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        trees.append(_grow_tree(matrix[rows], y[rows], params, rng))
    logger.debug(f"포레스트 적합 완료: 트리 {params.n_trees}개, n={n}, p={matrix.shape[1]}")
    return ForestPredictor(kind="forest", trees=tuple(trees), params=params)
