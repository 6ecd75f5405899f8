"""
分段路徑表示

以斷點、斷點值與各段斜率精確表示分段線性或分段常數路徑，
支援向量化求值、左極限、縮放、時間正規化與 JSON 序列化。

Author: Leon Lu
Created: 2025-01-24
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Union

import numpy as np

from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

# 求值時間超出 [0, T] 的容忍值 (相對於 T)
_HORIZON_TOL = 1e-12


class PathKind(str, Enum):
    """路徑類型枚舉"""
    LINEAR = "linear"      # 連續分段線性
    STEP = "step"          # 右連續分段常數
    SAMPLED = "sampled"    # 網格取樣值，段間線性插值


@dataclass(frozen=True, eq=False)
class PiecewisePath:
    """
    [0, T] 上的分段路徑

    第 i 段為 [breakpoints[i], breakpoints[i+1])，最後一段延伸至 horizon，
    段上取值 values[i] + slopes[i] * (t - breakpoints[i])。

    Attributes:
        breakpoints: 從 0 開始的嚴格遞增時間
        values: 斷點處的 (右) 值
        slopes: 各段斜率 (step 路徑全為 0)
        kind: 路徑類型
        horizon: 時間區間終點 T
    """
    breakpoints: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    kind: PathKind
    horizon: float

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        s = np.array(self.slopes, dtype=float)
        kind = PathKind(self.kind)
        horizon = float(self.horizon)

        if b.ndim != 1 or b.size == 0:
            raise InvalidParameterError("斷點必須是非空一維陣列")
        if v.shape != b.shape or s.shape != b.shape:
            raise InvalidParameterError(
                f"斷點、值與斜率長度不一致: {b.shape}, {v.shape}, {s.shape}"
            )
        if b[0] != 0.0:
            raise InvalidParameterError(f"第一個斷點必須為 0: {b[0]}")
        if b.size > 1 and np.any(np.diff(b) <= 0):
            raise InvalidParameterError("斷點必須嚴格遞增")
        if not np.isfinite(horizon) or horizon <= 0 or b[-1] > horizon * (1 + _HORIZON_TOL):
            raise InvalidParameterError(f"時間區間不合法: horizon={horizon}, 最後斷點={b[-1]}")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(s))):
            raise InvalidParameterError("路徑值與斜率必須為有限值")
        if kind == PathKind.STEP and np.any(s != 0):
            raise InvalidParameterError("階梯路徑的斜率必須為 0")
        if kind != PathKind.STEP and b.size > 1:
            # 連續性: 前一段在下一斷點的左極限等於下一斷點值
            predicted = v[:-1] + s[:-1] * np.diff(b)
            scale = 1.0 + np.max(np.abs(v))
            if np.max(np.abs(predicted - v[1:])) > 1e-9 * scale:
                raise InvalidParameterError("分段線性路徑在斷點處不連續")

        for array in (b, v, s):
            array.setflags(write=False)
        object.__setattr__(self, 'breakpoints', b)
        object.__setattr__(self, 'values', v)
        object.__setattr__(self, 'slopes', s)
        object.__setattr__(self, 'kind', kind)
        object.__setattr__(self, 'horizon', horizon)

    # ===================
    # 建構
    # ===================

    @classmethod
    def ray(cls, slope: float, horizon: float) -> "PiecewisePath":
        """從原點出發的射線 t ↦ slope·t"""
        return cls(np.zeros(1), np.zeros(1), np.array([float(slope)]), PathKind.LINEAR, horizon)

    @classmethod
    def zero(cls, horizon: float) -> "PiecewisePath":
        """零路徑"""
        return cls(np.zeros(1), np.zeros(1), np.zeros(1), PathKind.STEP, horizon)

    @classmethod
    def step(cls, jump_times: np.ndarray, jump_sizes: np.ndarray, horizon: float) -> "PiecewisePath":
        """
        由跳躍時間與跳躍量建立右連續階梯路徑 (起點為 0)

        超出 horizon 的跳躍會被捨棄。
        """
        times = np.asarray(jump_times, dtype=float)
        sizes = np.asarray(jump_sizes, dtype=float)
        keep = times <= horizon
        times, sizes = times[keep], sizes[keep]
        breakpoints = np.concatenate(([0.0], times))
        values = np.concatenate(([0.0], np.cumsum(sizes)))
        return cls(breakpoints, values, np.zeros_like(breakpoints), PathKind.STEP, horizon)

    @classmethod
    def sampled(cls, times: np.ndarray, samples: np.ndarray, horizon: float) -> "PiecewisePath":
        """由網格取樣值建立線性插值路徑，最後一個取樣點之後保持常數"""
        t = np.asarray(times, dtype=float)
        x = np.asarray(samples, dtype=float)
        slopes = np.zeros_like(t)
        if t.size > 1:
            slopes[:-1] = np.diff(x) / np.diff(t)
        return cls(t, x, slopes, PathKind.SAMPLED, horizon)

    # ===================
    # 求值
    # ===================

    def _check_times(self, t: np.ndarray):
        if np.any(t < -_HORIZON_TOL * self.horizon) or np.any(t > self.horizon * (1 + _HORIZON_TOL)):
            raise InvalidParameterError(f"求值時間超出 [0, {self.horizon}]")

    def evaluate(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """右連續求值 (支援陣列)"""
        times = np.asarray(t, dtype=float)
        self._check_times(times)
        index = np.searchsorted(self.breakpoints, times, side='right') - 1
        index = np.clip(index, 0, self.breakpoints.size - 1)
        result = self.values[index] + self.slopes[index] * (times - self.breakpoints[index])
        return float(result) if result.ndim == 0 else result

    def __call__(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self.evaluate(t)

    def left_limit(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """左極限 X(t-)，t=0 時回傳 X(0)"""
        times = np.asarray(t, dtype=float)
        self._check_times(times)
        index = np.searchsorted(self.breakpoints, times, side='left') - 1
        index = np.clip(index, 0, self.breakpoints.size - 1)
        result = self.values[index] + self.slopes[index] * (times - self.breakpoints[index])
        return float(result) if result.ndim == 0 else result

    @property
    def n_segments(self) -> int:
        return int(self.breakpoints.size)

    @property
    def final_value(self) -> float:
        """X(T)"""
        return float(self.evaluate(self.horizon))

    # ===================
    # 轉換
    # ===================

    def scale(self, factor: float) -> "PiecewisePath":
        """空間縮放 a·X"""
        return PiecewisePath(self.breakpoints, self.values * factor, self.slopes * factor,
                             self.kind, self.horizon)

    def rescale_time_to_unit(self) -> "PiecewisePath":
        """時間正規化 t ↦ X(T t)，得到 [0, 1] 上的路徑"""
        T = self.horizon
        return PiecewisePath(self.breakpoints / T, self.values, self.slopes * T, self.kind, 1.0)

    def equals(self, other: "PiecewisePath", atol: float = 0.0) -> bool:
        """逐項比較 (可設定容忍值)"""
        if self.kind != other.kind or self.breakpoints.shape != other.breakpoints.shape:
            return False
        return (abs(self.horizon - other.horizon) <= atol
                and np.allclose(self.breakpoints, other.breakpoints, rtol=0, atol=atol)
                and np.allclose(self.values, other.values, rtol=0, atol=atol)
                and np.allclose(self.slopes, other.slopes, rtol=0, atol=atol))

    # ===================
    # 序列化
    # ===================

    def to_dict(self) -> Dict[str, Any]:
        """轉換為字典"""
        return {
            'kind': self.kind.value,
            'horizon': self.horizon,
            'breakpoints': self.breakpoints.tolist(),
            'values': self.values.tolist(),
            'slopes': self.slopes.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PiecewisePath":
        """從字典建立"""
        try:
            return cls(
                breakpoints=np.asarray(data['breakpoints'], dtype=float),
                values=np.asarray(data['values'], dtype=float),
                slopes=np.asarray(data['slopes'], dtype=float),
                kind=PathKind(data['kind']),
                horizon=float(data['horizon']),
            )
        except KeyError as e:
            raise InvalidParameterError(f"路徑紀錄缺少欄位: {e}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PiecewisePath":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return (f"PiecewisePath(kind={self.kind.value}, horizon={self.horizon}, "
                f"segments={self.n_segments})")
