"""
電報過程 (自由速度翻轉模型)

由等待時間序列精確建構速度翻轉路徑 X(t; d)，提供跳躍計數、路徑求值、
單路徑與大量向量化取樣，以及一階、二階動差與絕對動差界限的封閉形式。

Author: Leon Lu
Created: 2025-01-24
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import special

from .errors import (
    InvalidParameterError,
    ResourceLimitError,
    require_non_negative,
    require_positive,
    require_positive_int,
)
from .paths import PathKind, PiecewisePath
from .randkit import RngLike, as_generator

logger = logging.getLogger(__name__)

# 單一路徑跳躍數上限
MAX_JUMPS = 100_000_000

# 已校準的絕對動差常數 C(r) (scripts/calibrate_constants.py)
DEFAULT_ABS_MOMENT_CONSTANTS: Dict[float, float] = {1.0: 1.0, 2.0: 1.0, 4.0: 6.0}

# 向量化取樣每批路徑數
DEFAULT_POSITION_BATCH = 2 ** 17

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ScalingParams:
    """
    模型參數 (v0, λ, L, T) 及其無因次組合

    Attributes:
        v0: 速度 (≠ 0)
        lam: 翻轉速率 λ
        L: 空間尺度
        T: 時間區間
    """
    v0: float
    lam: float
    L: float
    T: float

    def __post_init__(self):
        v0 = float(self.v0)
        if not math.isfinite(v0) or v0 == 0.0:
            raise InvalidParameterError(f"v0 必須為非零有限值: {self.v0!r}", {'v0': self.v0})
        object.__setattr__(self, 'v0', v0)
        object.__setattr__(self, 'lam', require_positive('lam', self.lam))
        object.__setattr__(self, 'L', require_positive('L', self.L))
        object.__setattr__(self, 'T', require_positive('T', self.T))

    @classmethod
    def from_scaling(cls, T_star: float, L_star: float,
                     v0: float = 1.0, lam: float = 1.0) -> "ScalingParams":
        """由 (T★, L★) 建立參數: T = T★/λ, L = L★|v0|/λ"""
        T_star = require_positive('T_star', T_star)
        L_star = require_positive('L_star', L_star)
        lam = require_positive('lam', lam)
        return cls(v0=v0, lam=lam, L=L_star * abs(float(v0)) / lam, T=T_star / lam)

    @classmethod
    def from_config(cls, section: Mapping[str, Any]) -> "ScalingParams":
        """從 simulation 配置區段建立"""
        return cls(
            v0=section.get('v0', 1.0),
            lam=section.get('lam', 1.0),
            L=section.get('L', 1.0),
            T=section.get('T', 1.0),
        )

    @property
    def T_star(self) -> float:
        """T★ = λT"""
        return self.lam * self.T

    @property
    def L_star(self) -> float:
        """L★ = λL/|v0|"""
        return self.lam * self.L / abs(self.v0)

    @property
    def sigma2(self) -> float:
        """擴散係數 σ² = v0²/(λL²)"""
        return self.v0 ** 2 / (self.lam * self.L ** 2)

    @property
    def zeta(self) -> float:
        """ζ = T★/L★²"""
        return self.T_star / self.L_star ** 2

    def to_dict(self) -> Dict[str, float]:
        return {
            'v0': self.v0, 'lam': self.lam, 'L': self.L, 'T': self.T,
            'T_star': self.T_star, 'L_star': self.L_star, 'sigma2': self.sigma2,
        }


@dataclass(frozen=True, eq=False)
class WaitingTimes:
    """
    等待時間序列

    前 n 個間隔由 gaps 給定，之後所有間隔皆為 tail_gap。

    Attributes:
        gaps: 正實數間隔 (可為空)
        tail_gap: 尾端哨兵間隔
    """
    gaps: np.ndarray
    tail_gap: float

    def __post_init__(self):
        gaps = np.array(self.gaps, dtype=float).reshape(-1)
        if np.any(~(gaps > 0)) or not np.all(np.isfinite(gaps)):
            raise InvalidParameterError("等待時間間隔必須全部為有限正數")
        gaps.setflags(write=False)
        object.__setattr__(self, 'gaps', gaps)
        object.__setattr__(self, 'tail_gap', require_positive('tail_gap', self.tail_gap))

    @property
    def n(self) -> int:
        return int(self.gaps.size)

    @property
    def partial_sums(self) -> np.ndarray:
        """t_1, ..., t_n"""
        return np.cumsum(self.gaps)

    def jump_times_until(self, t: float, max_jumps: int = MAX_JUMPS) -> np.ndarray:
        """所有不超過 t 的跳躍時間 (含尾端哨兵部分)"""
        count = jump_count(t, self)
        if count > max_jumps:
            raise ResourceLimitError(
                f"跳躍數 {count} 超過上限 {max_jumps}", {'jumps': count, 'max_jumps': max_jumps}
            )
        sums = self.partial_sums
        if count <= self.n:
            return sums[:count]
        base = sums[-1] if self.n else 0.0
        tail = base + self.tail_gap * np.arange(1, count - self.n + 1)
        return np.concatenate((sums, tail))


def _tail_jumps(t: float, base: float, tail_gap: float) -> int:
    """尾端區域中滿足 base + m·tail_gap ≤ t 的最大 m"""
    if t < base:
        return 0
    m = int(math.floor((t - base) / tail_gap))
    # 修正浮點捨入，使結果與 jump_times_until 的時間一致
    while m > 0 and base + m * tail_gap > t:
        m -= 1
    while base + (m + 1) * tail_gap <= t:
        m += 1
    return m


def jump_count(t: float, d: WaitingTimes) -> int:
    """
    跳躍計數 N(t; d) = sup{n : t_n ≤ t}

    Args:
        t: 時間 (≥ 0)
        d: 等待時間序列

    Returns:
        int: 滿足 t_n ≤ t < t_{n+1} 的唯一 n
    """
    t = require_non_negative('t', t)
    sums = d.partial_sums
    inside = int(np.searchsorted(sums, t, side='right'))
    if inside < d.n:
        return inside
    base = float(sums[-1]) if d.n else 0.0
    return d.n + _tail_jumps(t, base, d.tail_gap)


def path_eval(t: float, d: WaitingTimes, v0: float) -> float:
    """
    路徑求值 X(t; d) = v0 Σ_{k≤M} (-1)^{k-1} δ_k + v0 (-1)^M (t - t_M)

    Args:
        t: 時間 (≥ 0)
        d: 等待時間序列
        v0: 初始速度

    Returns:
        float: 位置
    """
    t = require_non_negative('t', t)
    M = jump_count(t, d)
    inside = min(M, d.n)
    signs = np.where(np.arange(inside) % 2 == 0, 1.0, -1.0)
    alternating = float(np.dot(signs, d.gaps[:inside]))
    t_M = float(d.partial_sums[inside - 1]) if inside else 0.0

    extra = M - d.n
    if extra > 0:
        # 尾端成對抵銷，只剩奇數個時的最後一項
        if extra % 2 == 1:
            alternating += d.tail_gap * (-1.0) ** d.n
        t_M += extra * d.tail_gap

    return v0 * alternating + v0 * (-1.0) ** M * (t - t_M)


def path_from_waiting_times(d: WaitingTimes, v0: float, T: float,
                            max_jumps: int = MAX_JUMPS) -> PiecewisePath:
    """
    建立 [0, T] 上的精確分段線性路徑

    斜率依序為 v0, -v0, v0, ...，斷點數為 1 + N(T)。
    """
    T = require_positive('T', T)
    jumps = d.jump_times_until(T, max_jumps)
    breakpoints = np.concatenate(([0.0], jumps))
    slopes = np.where(np.arange(breakpoints.size) % 2 == 0, v0, -v0).astype(float)
    values = np.zeros_like(breakpoints)
    if breakpoints.size > 1:
        values[1:] = np.cumsum(slopes[:-1] * np.diff(breakpoints))
    return PiecewisePath(breakpoints, values, slopes, PathKind.LINEAR, T)


def _initial_velocity(gen: np.random.Generator, v0: float, randomize: bool) -> float:
    if not randomize:
        return v0
    return v0 if gen.integers(0, 2) == 1 else -v0


def sample_waiting_times(rng: RngLike, params: ScalingParams,
                         max_jumps: int = MAX_JUMPS) -> WaitingTimes:
    """
    取樣 Exp(λ) 間隔直到部分和超過 T

    Raises:
        ResourceLimitError: 區間內跳躍數超過 max_jumps
    """
    gen = as_generator(rng)
    return _draw_waiting_times(gen, params, max_jumps)


def _draw_waiting_times(gen: np.random.Generator, params: ScalingParams,
                        max_jumps: int) -> WaitingTimes:
    chunk = int(params.T_star + 4.0 * math.sqrt(params.T_star) + 16)
    pieces = []
    total = 0.0
    drawn = 0
    while total <= params.T:
        gaps = gen.exponential(1.0 / params.lam, chunk)
        pieces.append(gaps)
        drawn += chunk
        total += float(gaps.sum())
        if drawn > max_jumps + chunk:
            raise ResourceLimitError(
                f"跳躍數超過上限 {max_jumps} (λT={params.T_star})",
                {'max_jumps': max_jumps, 'T_star': params.T_star},
            )
    gaps = np.concatenate(pieces)
    # 保留到第一個超過 T 的間隔為止
    stop = int(np.searchsorted(np.cumsum(gaps), params.T, side='right')) + 1
    if stop - 1 > max_jumps:
        raise ResourceLimitError(
            f"跳躍數 {stop - 1} 超過上限 {max_jumps}", {'jumps': stop - 1, 'max_jumps': max_jumps}
        )
    return WaitingTimes(gaps[:stop], 2.0 * params.T)


def sample_telegraph(rng: RngLike, params: ScalingParams,
                     randomize_velocity: bool = False,
                     max_jumps: int = MAX_JUMPS) -> PiecewisePath:
    """
    取樣一條電報過程路徑

    Args:
        rng: 亂數來源
        params: 模型參數
        randomize_velocity: 初始速度是否以等機率取 ±v0
        max_jumps: 跳躍數上限

    Returns:
        PiecewisePath: [0, T] 上的分段線性路徑
    """
    gen = as_generator(rng)
    v0 = _initial_velocity(gen, params.v0, randomize_velocity)
    d = _draw_waiting_times(gen, params, max_jumps)
    path = path_from_waiting_times(d, v0, params.T, max_jumps)
    logger.debug(f"電報路徑: N(T)={path.n_segments - 1}, X(T)={path.final_value:.6g}")
    return path


def sample_positions(rng: RngLike, params: ScalingParams, times: Sequence[float],
                     n_paths: int, randomize_velocity: bool = False,
                     batch_size: int = DEFAULT_POSITION_BATCH) -> np.ndarray:
    """
    向量化取樣多條路徑在指定時間的位置

    不建立路徑物件，直接以間隔矩陣計算 X(t) = v0 (A_N + (-1)^N (t - t_N))。

    Args:
        rng: 亂數來源
        params: 模型參數 (只使用 v0, λ)
        times: 非負求值時間
        n_paths: 路徑數
        randomize_velocity: 初始速度是否隨機
        batch_size: 每批路徑數上限

    Returns:
        np.ndarray: 形狀 (n_paths, len(times)) 的位置矩陣
    """
    n_paths = require_positive_int('n_paths', n_paths)
    eval_times = np.asarray(times, dtype=float).reshape(-1)
    if eval_times.size == 0 or np.any(eval_times < 0) or not np.all(np.isfinite(eval_times)):
        raise InvalidParameterError("求值時間必須為非空的非負有限值")

    gen = as_generator(rng)
    t_max = float(eval_times.max())
    expected = params.lam * t_max
    columns = int(expected + 6.0 * math.sqrt(expected) + 8)
    batch = max(1024, min(batch_size, 2 ** 24 // columns))

    result = np.empty((n_paths, eval_times.size))
    for start in range(0, n_paths, batch):
        size = min(batch, n_paths - start)
        gaps = gen.exponential(1.0 / params.lam, (size, columns))
        # 補足欄位直到每條路徑的最後跳躍都超過 t_max
        while np.any(gaps.sum(axis=1) <= t_max):
            extra = gen.exponential(1.0 / params.lam, (size, max(8, columns // 4)))
            gaps = np.concatenate((gaps, extra), axis=1)

        jump_times = np.zeros((size, gaps.shape[1] + 1))
        np.cumsum(gaps, axis=1, out=jump_times[:, 1:])
        signs = np.where(np.arange(gaps.shape[1]) % 2 == 0, 1.0, -1.0)
        alternating = np.zeros_like(jump_times)
        np.cumsum(gaps * signs, axis=1, out=alternating[:, 1:])

        velocity = np.full(size, params.v0)
        if randomize_velocity:
            velocity = np.where(gen.integers(0, 2, size) == 1, params.v0, -params.v0)

        for j, t in enumerate(eval_times):
            N = (jump_times[:, 1:] <= t).sum(axis=1)
            idx = N[:, None]
            A = np.take_along_axis(alternating, idx, axis=1)[:, 0]
            t_N = np.take_along_axis(jump_times, idx, axis=1)[:, 0]
            parity = np.where(N % 2 == 0, 1.0, -1.0)
            result[start:start + size, j] = velocity * (A + parity * (t - t_N))

    return result


# ===================
# 封閉形式動差
# ===================

def _times(t: ArrayLike) -> np.ndarray:
    values = np.asarray(t, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidParameterError(f"時間必須為非負有限值: {t!r}")
    return values


def _scalar_or_array(values: np.ndarray) -> ArrayLike:
    return float(values) if values.ndim == 0 else values


def mean_exact(t: ArrayLike, params: ScalingParams) -> ArrayLike:
    """E[X(t)] = v0/(2λ) (1 - e^{-2λt})"""
    values = _times(t)
    lam = params.lam
    return _scalar_or_array(-params.v0 / (2.0 * lam) * np.expm1(-2.0 * lam * values))


def second_moment_exact(t: ArrayLike, params: ScalingParams) -> ArrayLike:
    """E[X(t)²] = v0²/(2λ²) (2λt - (1 - e^{-2λt}))"""
    values = _times(t)
    lam = params.lam
    x = 2.0 * lam * values
    return _scalar_or_array(params.v0 ** 2 / (2.0 * lam ** 2) * (x + np.expm1(-x)))


def variance_exact(t: ArrayLike, params: ScalingParams) -> ArrayLike:
    """Var[X(t)] = (v0²/λ²)(λt + e^{-2λt} - e^{-4λt}/4 - 3/4)"""
    values = _times(t)
    lam = params.lam
    lt = lam * values
    inner = lt + np.exp(-2.0 * lt) - np.exp(-4.0 * lt) / 4.0 - 0.75
    return _scalar_or_array(np.maximum(params.v0 ** 2 / lam ** 2 * inner, 0.0))


def gaussian_abs_moment(r: float) -> float:
    """標準常態絕對動差 C̃(r) = 2^{r/2} Γ((r+1)/2)/√π (r > -1)"""
    r = float(r)
    if not math.isfinite(r) or r <= -1.0:
        raise InvalidParameterError(f"r 必須大於 -1: {r!r}")
    return math.exp(0.5 * r * math.log(2.0) + special.gammaln((r + 1.0) / 2.0)) / math.sqrt(math.pi)


def abs_moment_bound(t: float, r: float, params: ScalingParams,
                     C_r: Optional[float] = None) -> float:
    """
    絕對動差界限

    E|X(t)|^r ≤ min{|v0|^r (C̃(r) λ^{-r/2} t^{r/2} + C(r) λ^{-r/2-1} t^{r/2-1}), |v0|^r t^r}

    Args:
        t: 時間 (> 0)
        r: 動差階數 (> 0)
        params: 模型參數
        C_r: 常數 C(r)；未提供時使用已校準值 (未校準的 r 使用 1.0)
    """
    t = require_positive('t', t)
    r = require_positive('r', r)
    if C_r is None:
        C_r = DEFAULT_ABS_MOMENT_CONSTANTS.get(r, 1.0)
    C_r = require_non_negative('C_r', C_r)

    lam = params.lam
    speed = abs(params.v0) ** r
    stated = speed * (gaussian_abs_moment(r) * lam ** (-r / 2.0) * t ** (r / 2.0)
                      + C_r * lam ** (-r / 2.0 - 1.0) * t ** (r / 2.0 - 1.0))
    crude = speed * t ** r
    return min(stated, crude)


def calibrate_abs_moment_constant(r: float, rng: RngLike,
                                  params: Optional[ScalingParams] = None,
                                  times: Optional[Sequence[float]] = None,
                                  n_paths: int = 100_000,
                                  safety: float = 1.0) -> float:
    """
    以暴力蒙地卡羅校準 C(r)

    在時間網格上估計 E|X(t)|^r，取使界限成立所需常數的最大值。

    Args:
        r: 動差階數
        rng: 亂數來源
        params: 模型參數 (預設 v0 = λ = 1)
        times: 時間網格 (預設 0.05 到 50 的等比網格)
        n_paths: 每個時間點的路徑數
        safety: 乘上的安全係數

    Returns:
        float: 校準後的 C(r) (≥ 0)
    """
    r = require_positive('r', r)
    safety = require_positive('safety', safety)
    params = params or ScalingParams(v0=1.0, lam=1.0, L=1.0, T=1.0)
    grid = np.geomspace(0.05, 50.0, 24) if times is None else np.asarray(times, dtype=float)

    positions = sample_positions(rng, params, grid, n_paths)
    empirical = np.mean(np.abs(positions) ** r, axis=0)

    lam = params.lam
    speed = abs(params.v0) ** r
    gaussian_part = speed * gaussian_abs_moment(r) * lam ** (-r / 2.0) * grid ** (r / 2.0)
    scale = speed * lam ** (-r / 2.0 - 1.0) * grid ** (r / 2.0 - 1.0)
    required = (empirical - gaussian_part) / scale

    constant = max(0.0, float(required.max())) * safety
    logger.info(f"絕對動差常數校準完成: r={r}, C(r)={constant:.6g} ({n_paths} 條路徑)")
    return constant
