"""
유틸리티 모듈

시뮬레이터, 학습기, 추정기, 진단, 몬테카를로 하네스 등 워크벤치 계산 로직을 제공합니다.
"""
