"""
中間過程建構

以同一組輸入 (n, u) 建構截斷過程 Y、隨機漫步的càdlàg版本 Z、
輔助過程 Z̃ 與均勻網格漫步 S，並提供以卜瓦松跳躍數混合的取樣。

Author: Leon Lu
Created: 2025-01-24
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Union

import numpy as np

from .errors import InvalidParameterError, require_positive, require_positive_int
from .paths import PiecewisePath
from .randkit import RngLike, as_generator
from .telegraph import ScalingParams, WaitingTimes, path_eval, path_from_waiting_times

logger = logging.getLogger(__name__)

Builder = Callable[["SurrogateInputs"], PiecewisePath]


@dataclass(frozen=True, eq=False)
class SurrogateInputs:
    """
    中間過程的共同輸入

    Attributes:
        n: 跳躍數 K 的取值 (≥ 0)
        u: n 個 Exp(1) 變數
        params: 模型參數
    """
    n: int
    u: np.ndarray
    params: ScalingParams

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 0:
            raise InvalidParameterError(f"n 必須是非負整數: {self.n!r}")
        u = np.array(self.u, dtype=float).reshape(-1)
        if u.size != self.n:
            raise InvalidParameterError(f"u 長度 {u.size} 與 n={self.n} 不一致")
        if np.any(~(u > 0)) or not np.all(np.isfinite(u)):
            raise InvalidParameterError("u 必須全部為有限正數")
        u.setflags(write=False)
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 'u', u)

    @property
    def n_pairs(self) -> int:
        """ñ = ⌊n/2⌋"""
        return self.n // 2

    def rescaled_gaps(self) -> np.ndarray:
        """w = (T/n) u"""
        if self.n == 0:
            return np.zeros(0)
        return self.params.T / self.n * self.u

    def exponential_gaps(self) -> np.ndarray:
        """s = u/λ"""
        return self.u / self.params.lam


def even_jump_times(gaps: np.ndarray) -> np.ndarray:
    """偶數跳躍時間 t_2, t_4, ..."""
    return np.cumsum(np.asarray(gaps, dtype=float))[1::2]


@dataclass(frozen=True, eq=False)
class WalkIncrements:
    """
    偶數跳躍位移

    Attributes:
        eta_star: η*_k = -(v0/L)(s_{2k} - s_{2k-1})
        even_jump_times: t_{2k}(s)
    """
    eta_star: np.ndarray
    even_jump_times: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta_star, dtype=float).reshape(-1)
        times = np.array(self.even_jump_times, dtype=float).reshape(-1)
        if eta.shape != times.shape:
            raise InvalidParameterError(f"位移與時間長度不一致: {eta.size} vs {times.size}")
        for array in (eta, times):
            array.setflags(write=False)
        object.__setattr__(self, 'eta_star', eta)
        object.__setattr__(self, 'even_jump_times', times)

    @property
    def n_pairs(self) -> int:
        return int(self.eta_star.size)

    @classmethod
    def from_inputs(cls, inputs: SurrogateInputs) -> "WalkIncrements":
        """以 s = u/λ 計算 η* 與偶數跳躍時間"""
        pairs = inputs.n_pairs
        s = inputs.exponential_gaps()
        odd, even = s[0:2 * pairs:2], s[1:2 * pairs:2]
        eta = -(inputs.params.v0 / inputs.params.L) * (even - odd)
        return cls(eta, even_jump_times(s[:2 * pairs]))


def build_Y(inputs: SurrogateInputs) -> PiecewisePath:
    """
    截斷過程 Y = L^{-1} X(·; d^{(n)})

    間隔為 (T/n)u_k，超過 n 之後的間隔為 2T；n = 0 時為射線 t ↦ v0 t/L。
    """
    params = inputs.params
    if inputs.n == 0:
        return PiecewisePath.ray(params.v0 / params.L, params.T)
    d = WaitingTimes(inputs.rescaled_gaps(), 2.0 * params.T)
    return path_from_waiting_times(d, params.v0, params.T).scale(1.0 / params.L)


def build_Z(inputs: SurrogateInputs) -> PiecewisePath:
    """
    隨機漫步 Z 的càdlàg版本

    在 t_{2k}(s) 跳 η*_k (只保留 [0, T] 內的跳躍)；n ∈ {0, 1} 時為零路徑。
    """
    params = inputs.params
    if inputs.n < 2:
        return PiecewisePath.zero(params.T)
    increments = WalkIncrements.from_inputs(inputs)
    return PiecewisePath.step(increments.even_jump_times, increments.eta_star, params.T)


def build_Ztilde(inputs: SurrogateInputs) -> PiecewisePath:
    """
    輔助過程 Z̃

    在重新縮放的偶數跳躍時間 t_{2k}(w) 跳 (T★/n) η*_k，與 build_Z 共用 η*。
    """
    params = inputs.params
    if inputs.n < 2:
        return PiecewisePath.zero(params.T)
    increments = WalkIncrements.from_inputs(inputs)
    times = even_jump_times(inputs.rescaled_gaps()[:2 * inputs.n_pairs])
    sizes = params.T_star / inputs.n * increments.eta_star
    return PiecewisePath.step(times, sizes, params.T)


def build_grid_walk(increments: WalkIncrements, n: int, T: float) -> PiecewisePath:
    """
    均勻網格漫步 S

    第 ℓ 個位移放在 ℓT/ñ，右連續，因此 S(T) 為全部位移之和。
    """
    n = require_positive_int('n', n, minimum=2)
    T = require_positive('T', T)
    pairs = n // 2
    if increments.n_pairs != pairs:
        raise InvalidParameterError(f"位移數 {increments.n_pairs} 與 ⌊n/2⌋={pairs} 不一致")
    times = T * np.arange(1, pairs + 1) / pairs
    times[-1] = T
    return PiecewisePath.step(times, increments.eta_star, T)


def build_grid_walk_from_inputs(inputs: SurrogateInputs) -> PiecewisePath:
    """由共同輸入建立網格漫步；n < 2 時為零路徑"""
    if inputs.n < 2:
        return PiecewisePath.zero(inputs.params.T)
    return build_grid_walk(WalkIncrements.from_inputs(inputs), inputs.n, inputs.params.T)


BUILDERS: Dict[str, Builder] = {
    'Y': build_Y,
    'Z': build_Z,
    'Ztilde': build_Ztilde,
    'S': build_grid_walk_from_inputs,
}


def sample_surrogate_inputs(rng: RngLike, params: ScalingParams) -> SurrogateInputs:
    """先取 K ~ Po(T★)，再取 K 個 Exp(1)"""
    gen = as_generator(rng)
    K = int(gen.poisson(params.T_star))
    u = gen.standard_exponential(K)
    return SurrogateInputs(K, u, params)


def mix_over_poisson(rng: RngLike, params: ScalingParams,
                     builder: Union[str, Builder]) -> PiecewisePath:
    """
    以卜瓦松跳躍數混合

    Args:
        rng: 亂數來源
        params: 模型參數
        builder: 'Y'、'Z'、'Ztilde'、'S' 或任意接受 SurrogateInputs 的建構函式
    """
    if isinstance(builder, str):
        if builder not in BUILDERS:
            raise InvalidParameterError(f"未知的過程名稱: {builder}，可用: {sorted(BUILDERS)}")
        builder = BUILDERS[builder]
    inputs = sample_surrogate_inputs(rng, params)
    logger.debug(f"卜瓦松混合: K={inputs.n}")
    return builder(inputs)


def interpolation_identity_gap(inputs: SurrogateInputs) -> float:
    """Y 與 Z̃ 在 [0, T] 內偶數重新縮放跳躍時間上的最大差距"""
    if inputs.n < 2:
        return 0.0
    times = even_jump_times(inputs.rescaled_gaps()[:2 * inputs.n_pairs])
    times = times[times <= inputs.params.T]
    if times.size == 0:
        return 0.0
    gap = np.abs(build_Y(inputs).evaluate(times) - build_Ztilde(inputs).evaluate(times))
    return float(gap.max())


def walk_increment_identity_gap(inputs: SurrogateInputs) -> float:
    """
    偶數跳躍增量恆等式的最大偏差

    L^{-1}X(t_{2k}) - L^{-1}X(t_{2k-2}) 與 η*_k 比較 (X 以 s = u/λ 為間隔)。
    """
    if inputs.n < 2:
        return 0.0
    params = inputs.params
    s = inputs.exponential_gaps()
    d = WaitingTimes(s, 2.0 * float(s.sum()))
    increments = WalkIncrements.from_inputs(inputs)
    times = np.concatenate(([0.0], increments.even_jump_times))
    positions = np.array([path_eval(t, d, params.v0) for t in times]) / params.L
    return float(np.max(np.abs(np.diff(positions) - increments.eta_star)))
