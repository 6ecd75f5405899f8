"""
拉普拉斯漫步與高斯部分和的強耦合

提供兩種具體建構:
- quantile: 每個增量透過累積分布函數單調配對
- dyadic: 先配對總和，再以數值表格化的條件分位數函數遞迴二分配對區塊和

增量 ξ 為 Laplace(1) (變異數 2)，配對的高斯增量為 N(0, 2)。

Author: Leon Lu
Created: 2025-01-24
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, integrate, special

from .errors import (
    InvalidParameterError,
    NumericResolutionError,
    require_finite_array,
    require_positive,
    require_positive_int,
)
from .randkit import RngLike, as_generator

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_LN2 = math.log(2.0)
_LOG_FLOOR = -745.0
_TAIL_FLOOR = 1e-300

DEFAULT_GRID_SIZE = 2 ** 14
DEFAULT_MASS_DEFECT_TOL = 1e-6
DEFAULT_CONDITIONAL_POINTS = 512


class KmtMode(str, Enum):
    """耦合建構方式"""
    QUANTILE = "quantile"
    DYADIC = "dyadic"


def support_radius(m: int) -> float:
    """m 個拉普拉斯變數和的表格半寬 12√(2m) + 30"""
    return 12.0 * math.sqrt(2.0 * m) + 30.0


@dataclass(frozen=True, eq=False)
class LaplaceSumTable:
    """
    m 個獨立 Laplace(1) 之和的密度表

    Attributes:
        m: 項數
        x: 均勻格點
        log_density: 格點上的對數密度
        lower_cdf: 格點上的累積分布函數
        radius: 表格半寬
        mass_defect: 負密度質量與截斷誤差之和
    """
    m: int
    x: np.ndarray
    log_density: np.ndarray
    lower_cdf: np.ndarray
    radius: float
    mass_defect: float

    def log_pdf(self, values: np.ndarray) -> np.ndarray:
        """對數密度 (m = 1 時為精確值)"""
        if self.m == 1:
            return -np.abs(values) - _LN2
        return np.interp(values, self.x, self.log_density, left=_LOG_FLOOR, right=_LOG_FLOOR)

    def lower_tail(self, values: np.ndarray) -> np.ndarray:
        """P(S_m ≤ -|v|)"""
        v = -np.abs(np.asarray(values, dtype=float))
        if self.m == 1:
            return 0.5 * np.exp(v)
        return np.interp(v, self.x, self.lower_cdf, left=0.0, right=0.5)


@lru_cache(maxsize=256)
def laplace_sum_table(m: int, grid_size: int = DEFAULT_GRID_SIZE,
                      mass_defect_tol: float = DEFAULT_MASS_DEFECT_TOL) -> LaplaceSumTable:
    """
    以特徵函數 (1+ω²)^{-m} 的快速傅立葉反轉建立密度表

    表格建立後唯讀，並以 (m, grid_size, mass_defect_tol) 快取。

    Raises:
        NumericResolutionError: 質量缺陷超過 mass_defect_tol
    """
    m = require_positive_int('m', m)
    grid_size = require_positive_int('grid_size', grid_size, minimum=16)
    radius = support_radius(m)
    h = 2.0 * radius / grid_size
    x = -radius + h * np.arange(grid_size)

    if m == 1:
        density = 0.5 * np.exp(-np.abs(x))
        defect = 0.0
    else:
        omega = 2.0 * np.pi * fft.fftfreq(grid_size, d=h)
        phi = np.exp(-m * np.log1p(omega ** 2))
        density = fft.fft(phi * np.exp(1j * omega * radius)).real / (grid_size * h)
        nyquist = math.exp(-m * math.log1p((math.pi / h) ** 2))
        defect = (h * float(np.abs(density[density < 0]).sum())
                  + nyquist
                  + abs(h * float(density.sum()) - 1.0))
        if defect > mass_defect_tol:
            raise NumericResolutionError(
                f"拉普拉斯和密度表解析度不足: m={m}, 質量缺陷={defect:.3g}",
                {'m': m, 'grid_size': grid_size, 'mass_defect': defect},
            )
        density = np.maximum(density, 0.0)

    with np.errstate(divide='ignore'):
        log_density = np.maximum(np.log(density), _LOG_FLOOR)
    lower_cdf = integrate.cumulative_trapezoid(density, dx=h, initial=0.0)
    for array in (x, log_density, lower_cdf):
        array.setflags(write=False)

    logger.debug(f"已建立拉普拉斯和密度表: m={m}, 格點={grid_size}, 質量缺陷={defect:.3g}")
    return LaplaceSumTable(m, x, log_density, lower_cdf, radius, defect)


def laplace_to_gaussian_quantile(xi: np.ndarray) -> np.ndarray:
    """單調配對 ζ = √2 Φ^{-1}(F_Laplace(ξ))，以對稱性計算尾端"""
    xi = np.asarray(xi, dtype=float)
    magnitude = -special.ndtri(np.maximum(0.5 * np.exp(-np.abs(xi)), _TAIL_FLOOR))
    return np.sign(xi) * _SQRT2 * magnitude


def _normal_score(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """由下尾與上尾機率計算 Φ^{-1}，取較小的一側以保持精度"""
    lower = np.clip(lower, _TAIL_FLOOR, 1.0)
    upper = np.clip(upper, _TAIL_FLOOR, 1.0)
    return np.where(lower <= upper, special.ndtri(np.minimum(lower, 0.5)),
                    -special.ndtri(np.minimum(upper, 0.5)))


def pair_split_cdf(x: np.ndarray, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    兩個 Laplace(1) 在和為 s 條件下第一項的條件分布 (封閉形式)

    Returns:
        (P(ξ₁ ≤ x | s), P(ξ₁ ≥ x | s))
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)

    def cdf(point):
        a = np.minimum(0.0, s)
        b = np.maximum(0.0, s)
        w = np.abs(s)
        left = 0.5 * np.exp(2.0 * np.minimum(point - a, 0.0))
        middle = 0.5 + np.clip(point, a, b) - a
        right = 0.5 + w - 0.5 * np.expm1(-2.0 * np.maximum(point - b, 0.0))
        value = np.where(point < a, left, np.where(point <= b, middle, right))
        return value / (w + 1.0)

    # 條件密度對 s/2 對稱
    return cdf(x), cdf(s - x)


class KmtCoupler:
    """
    拉普拉斯增量與高斯增量的耦合器

    couple(ξ) 回傳與 ξ 配對的 N(0, 2) 增量；dyadic 模式的表格在行程內共用。
    """

    def __init__(self, mode: str = KmtMode.DYADIC.value,
                 grid_size: int = DEFAULT_GRID_SIZE,
                 mass_defect_tol: float = DEFAULT_MASS_DEFECT_TOL,
                 conditional_points: int = DEFAULT_CONDITIONAL_POINTS):
        """
        初始化耦合器

        Args:
            mode: quantile 或 dyadic
            grid_size: 密度表格點數
            mass_defect_tol: 密度表質量缺陷容忍值
            conditional_points: 條件分位數局部網格點數
        """
        try:
            self.mode = KmtMode(mode)
        except ValueError:
            raise InvalidParameterError(f"未知的耦合模式: {mode}，可用: quantile, dyadic")
        self.grid_size = require_positive_int('grid_size', grid_size, minimum=16)
        self.mass_defect_tol = require_positive('mass_defect_tol', mass_defect_tol)
        self.conditional_points = require_positive_int('conditional_points',
                                                       conditional_points, minimum=8)

        self.stats = {
            'couplings': 0,
            'increments': 0,
            'closed_form_splits': 0,
            'tabulated_splits': 0,
        }

    @classmethod
    def from_config(cls, section: Dict[str, Any], mode: Optional[str] = None) -> "KmtCoupler":
        """從 kmt 配置區段建立"""
        return cls(
            mode=mode or section.get('mode', KmtMode.DYADIC.value),
            grid_size=section.get('grid_size', DEFAULT_GRID_SIZE),
            mass_defect_tol=section.get('mass_defect_tol', DEFAULT_MASS_DEFECT_TOL),
            conditional_points=section.get('conditional_points', DEFAULT_CONDITIONAL_POINTS),
        )

    def table(self, m: int) -> LaplaceSumTable:
        return laplace_sum_table(m, self.grid_size, self.mass_defect_tol)

    def couple(self, xi: Sequence[float]) -> np.ndarray:
        """
        耦合拉普拉斯增量

        Args:
            xi: Laplace(1) 增量

        Returns:
            np.ndarray: 同長度的 N(0, 2) 增量
        """
        xi = require_finite_array('xi', xi)
        self.stats['couplings'] += 1
        self.stats['increments'] += int(xi.size)
        if xi.size == 0:
            return np.zeros(0)
        if self.mode == KmtMode.QUANTILE:
            return laplace_to_gaussian_quantile(xi)
        return np.diff(self._dyadic_partial_sums(xi))

    def _root_gaussian(self, total: float, n: int) -> float:
        """G_n = √(2n) Φ^{-1}(F_n(S_n))"""
        p = float(self.table(n).lower_tail(total))
        magnitude = -special.ndtri(max(p, _TAIL_FLOOR))
        return math.copysign(math.sqrt(2.0 * n) * magnitude, total) if total != 0 else 0.0

    def _tabulated_split(self, x: np.ndarray, s: np.ndarray,
                         m1: int, m2: int) -> Tuple[np.ndarray, np.ndarray]:
        """在局部網格上數值計算 S_{m1} | S_m = s 的條件分布"""
        first, second = self.table(m1), self.table(m2)
        m = m1 + m2
        center = s * m1 / m
        half = 12.0 * math.sqrt(2.0 * m1 * m2 / m) + 30.0
        lo = np.maximum.reduce([center - half, np.full_like(s, -first.radius), s - second.radius])
        hi = np.minimum.reduce([center + half, np.full_like(s, first.radius), s + second.radius])
        if np.any(hi <= lo):
            raise NumericResolutionError(f"條件分位數視窗為空: m1={m1}, m2={m2}")

        points = self.conditional_points
        fractions = np.linspace(0.0, 1.0, points)
        grid = lo[:, None] + (hi - lo)[:, None] * fractions[None, :]
        log_q = first.log_pdf(grid) + second.log_pdf(s[:, None] - grid)
        q = np.exp(log_q - log_q.max(axis=1, keepdims=True))

        step = (hi - lo) / (points - 1)
        lower = integrate.cumulative_trapezoid(q, axis=1, initial=0.0)
        upper = integrate.cumulative_trapezoid(q[:, ::-1], axis=1, initial=0.0)[:, ::-1]
        total = lower[:, -1:]
        lower, upper = lower / total, upper / total

        position = (x - lo) / step
        index = np.clip(np.floor(position).astype(np.int64), 0, points - 2)
        frac = np.clip(position - index, 0.0, 1.0)
        rows = np.arange(x.size)
        u_lower = lower[rows, index] + frac * (lower[rows, index + 1] - lower[rows, index])
        u_upper = upper[rows, index] + frac * (upper[rows, index + 1] - upper[rows, index])
        return u_lower, u_upper

    def _dyadic_partial_sums(self, xi: np.ndarray) -> np.ndarray:
        n = xi.size
        walk = np.concatenate(([0.0], np.cumsum(xi)))
        gauss = np.zeros(n + 1)
        gauss[n] = self._root_gaussian(walk[n], n)

        start = np.array([0])
        end = np.array([n])
        while True:
            active = (end - start) >= 2
            if not np.any(active):
                break
            start, end = start[active], end[active]
            size = end - start
            m1 = size // 2
            mid = start + m1
            x = walk[mid] - walk[start]
            s = walk[end] - walk[start]
            g = gauss[end] - gauss[start]

            scores = np.empty(size.size)
            for m in np.unique(size):
                mask = size == m
                left, right = int(m // 2), int(m - m // 2)
                if left == 1 and right == 1:
                    u_lower, u_upper = pair_split_cdf(x[mask], s[mask])
                    self.stats['closed_form_splits'] += int(mask.sum())
                else:
                    u_lower, u_upper = self._tabulated_split(x[mask], s[mask], left, right)
                    self.stats['tabulated_splits'] += int(mask.sum())
                scores[mask] = _normal_score(u_lower, u_upper)

            spread = np.sqrt(2.0 * m1 * (size - m1) / size)
            gauss[mid] = gauss[start] + g * m1 / size + spread * scores
            start, end = np.concatenate((start, mid)), np.concatenate((mid, end))

        return gauss

    def get_statistics(self) -> Dict[str, Any]:
        """取得統計資訊"""
        stats = dict(self.stats)
        stats['mode'] = self.mode.value
        stats['cached_tables'] = laplace_sum_table.cache_info().currsize
        return stats

    def reset_statistics(self):
        """重設統計資訊"""
        for key in self.stats:
            self.stats[key] = 0

    def counts_since(self, snapshot: Dict[str, int]) -> Dict[str, int]:
        """
        自 snapshot 以來的計數增量

        joblib 工作程序中的計數不會回到主程序，須隨結果一併回傳。
        """
        return {key: self.stats[key] - snapshot.get(key, 0) for key in self.stats}


@dataclass(frozen=True)
class GapDiagnostic:
    """
    最大部分和差距診斷

    Attributes:
        mode: 耦合模式
        ns: 漫步長度
        median_gaps: 各長度下 max_m |S_m - G_m| 的中位數
        exponent: log 中位數對 log n 的擬合斜率
        replicates: 每個長度的複本數
        coupler_counts: 本次診斷的耦合器計數增量
    """
    mode: str
    ns: Tuple[int, ...]
    median_gaps: Tuple[float, ...]
    exponent: float
    replicates: int
    coupler_counts: Dict[str, int] = field(default_factory=dict)


def max_partial_sum_gap(xi: np.ndarray, gaussian: np.ndarray) -> float:
    """max_m |S_m - G_m|"""
    return float(np.max(np.abs(np.cumsum(xi) - np.cumsum(gaussian))))


def kmt_gap_diagnostic(rng: RngLike, ns: Sequence[int], replicates: int,
                       mode: str = KmtMode.DYADIC.value,
                       coupler: Optional[KmtCoupler] = None) -> GapDiagnostic:
    """
    測量耦合的最大部分和差距隨 n 的成長

    Args:
        rng: 亂數來源
        ns: 漫步長度 (至少兩個不同值)
        replicates: 每個長度的複本數
        mode: 耦合模式
        coupler: 既有耦合器 (忽略 mode)
    """
    sizes = [require_positive_int('n', n) for n in ns]
    if len(set(sizes)) < 2:
        raise InvalidParameterError("擬合成長指數至少需要兩個不同的 n")
    replicates = require_positive_int('replicates', replicates)
    coupler = coupler or KmtCoupler(mode=mode)
    gen = as_generator(rng)
    snapshot = dict(coupler.stats)

    medians = []
    for n in sizes:
        gaps = np.empty(replicates)
        for i in range(replicates):
            xi = gen.laplace(0.0, 1.0, n)
            gaps[i] = max_partial_sum_gap(xi, coupler.couple(xi))
        medians.append(float(np.median(gaps)))
        logger.debug(f"KMT差距: mode={coupler.mode.value}, n={n}, 中位數={medians[-1]:.4g}")

    exponent = float(np.polyfit(np.log(sizes), np.log(medians), 1)[0])
    logger.info(f"KMT差距成長指數: mode={coupler.mode.value}, 指數={exponent:.4f}")
    return GapDiagnostic(coupler.mode.value, tuple(sizes), tuple(medians), exponent, replicates,
                         coupler.counts_since(snapshot))
