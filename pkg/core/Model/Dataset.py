"""
四类数据集及其 CSV 读写
  XYData          回归 / GLM / 分位数        列 x,y
  PointsData      密度估计                   列 x
  SurvivalData    风险函数(时间不变协变量)    列 x,time,event
  PeriodogramData 谱密度                     列 lambda,I
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def _vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if np.any(~np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class XYData:
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        x, y = _vector(self.x, "x"), _vector(self.y, "y")
        if len(x) != len(y):
            raise ValueError(f"x and y lengths differ: {len(x)} vs {len(y)}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def size(self) -> int:
        return len(self.x)

    @property
    def locations(self) -> np.ndarray:
        return self.x


@dataclass(frozen=True, eq=False)
class PointsData:
    x: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x", _vector(self.x, "x"))

    @property
    def size(self) -> int:
        return len(self.x)

    @property
    def locations(self) -> np.ndarray:
        return self.x


@dataclass(frozen=True, eq=False)
class SurvivalData:
    """time = min(T, C)，event = T <= C"""

    x: np.ndarray = field(repr=False)
    time: np.ndarray = field(repr=False)
    event: np.ndarray = field(repr=False)

    def __post_init__(self):
        x, time = _vector(self.x, "x"), _vector(self.time, "time")
        raw = np.asarray(self.event)
        if raw.dtype != bool:
            if not np.all(np.isin(raw, (0, 1))):
                raise ValueError("event flags must be boolean or 0/1")
            raw = raw.astype(bool)
        if not len(x) == len(time) == len(raw):
            raise ValueError("x, time and event must have the same length")
        if np.any(time < 0):
            raise ValueError("observed times must be non-negative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", raw)

    @property
    def size(self) -> int:
        return len(self.x)

    @property
    def locations(self) -> np.ndarray:
        return self.x

    @property
    def censoring_rate(self) -> float:
        return float(1.0 - self.event.mean()) if self.size else 0.0


@dataclass(frozen=True, eq=False)
class PeriodogramData:
    """Fourier 频率 λ_k = 2πk/T (k = 1..[T/2]) 上的周期图"""

    lambda_k: np.ndarray = field(repr=False)
    periodogram: np.ndarray = field(repr=False)
    series_length: int

    def __post_init__(self):
        lam, ordinate = _vector(self.lambda_k, "lambda_k"), _vector(self.periodogram, "periodogram")
        if len(lam) != len(ordinate):
            raise ValueError("frequency grid and periodogram lengths differ")
        if np.any(ordinate < 0):
            raise ValueError("periodogram ordinates must be non-negative")
        T = int(self.series_length)
        k = np.arange(1, T // 2 + 1)
        if len(lam) != len(k) or not np.allclose(lam, 2 * math.pi * k / T, rtol=0, atol=1e-9):
            raise ValueError(f"frequency grid must be 2πk/T for k=1..{T // 2} with T={T}")
        object.__setattr__(self, "lambda_k", lam)
        object.__setattr__(self, "periodogram", ordinate)
        object.__setattr__(self, "series_length", T)

    @property
    def half_length(self) -> int:
        return self.series_length // 2

    @property
    def is_boundary(self) -> np.ndarray:
        # k >= 1，边界只可能是 λ = π (T 为偶数)
        return 2 * np.arange(1, self.half_length + 1) == self.series_length

    @property
    def size(self) -> int:
        return len(self.lambda_k)

    @property
    def locations(self) -> np.ndarray:
        return self.lambda_k


Dataset = Union[XYData, PointsData, SurvivalData, PeriodogramData]

_COLUMNS = {
    XYData: ["x", "y"],
    PointsData: ["x"],
    SurvivalData: ["x", "time", "event"],
    PeriodogramData: ["lambda", "I"],
}
DATASET_KINDS = {"xy": XYData, "points": PointsData, "survival": SurvivalData, "periodogram": PeriodogramData}


def dataset_to_frame(data: Dataset) -> pd.DataFrame:
    if isinstance(data, PeriodogramData):
        return pd.DataFrame({"lambda": data.lambda_k, "I": data.periodogram})
    if isinstance(data, SurvivalData):
        return pd.DataFrame({"x": data.x, "time": data.time, "event": data.event.astype(int)})
    return pd.DataFrame({col: getattr(data, col) for col in _COLUMNS[type(data)]})


def write_dataset(data: Dataset, path: Union[str, Path]) -> None:
    dataset_to_frame(data).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"[Dataset] 已写出 {type(data).__name__} ({data.size} 行) -> {path}")


def read_dataset(path: Union[str, Path], kind: str) -> Dataset:
    """按 kind 读取 CSV；列名不符时抛出 ValueError"""
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind '{kind}', expected one of {sorted(DATASET_KINDS)}")
    cls = DATASET_KINDS[kind]
    frame = pd.read_csv(path)
    missing = [c for c in _COLUMNS[cls] if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing} for dataset kind '{kind}'")
    if cls is PeriodogramData:
        lam = frame["lambda"].to_numpy(dtype=float)
        if len(lam) < 2:
            raise ValueError(f"{path}: periodogram needs at least two frequencies")
        T = int(round(2 * math.pi / (lam[1] - lam[0])))
        return PeriodogramData(lam, frame["I"].to_numpy(dtype=float), T)
    return cls(*(frame[c].to_numpy() for c in _COLUMNS[cls]))
