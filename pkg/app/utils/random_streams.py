"""
난수 스트림 유틸리티

모든 난수는 (seed, index...) 키로 파생된 카운터 기반 Philox 스트림에서 나온다.
직렬/병렬 실행 순서와 무관하게 같은 키는 항상 같은 난수를 만든다.
"""

from typing import Optional, Sequence

import numpy as np

_MASK64 = (1 << 64) - 1

# 교차적합 폴드 배정 스트림 키
FOLD_STREAM_KEY = 0xF01D


def seed_sequence(seed: int, *keys: int) -> np.random.SeedSequence:
    entropy = [int(seed) & _MASK64] + [int(key) & _MASK64 for key in keys]
    return np.random.SeedSequence(entropy)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """(seed, keys)로 고정된 Philox 생성기"""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys: int) -> int:
    """하위 작업용 63비트 시드 파생"""
    state = seed_sequence(seed, *keys).generate_state(1, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


def _splitmix64(values: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = values + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def assign_folds(n: int, k: int, seed: int, row_keys: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    행 키 기반 폴드 배정

    각 행의 우선순위는 (seed, 행 키)의 해시로 정해지므로 행 순서를 바꿔도 같은 키는 같은 폴드에 배정된다.
    폴드 크기 차이는 최대 1.
    """
    keys = np.arange(n, dtype=np.int64) if row_keys is None else np.asarray(row_keys, dtype=np.int64)
    salt = np.uint64(derive_seed(seed, FOLD_STREAM_KEY))
    priority = _splitmix64(keys.astype(np.uint64) ^ salt)
    order = np.lexsort((keys, priority))
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % k
    return folds
