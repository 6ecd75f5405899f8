"""
亂數取樣與動差對照表

以 (seed, stream_id) 決定的計數式亂數流提供所有需要的分布取樣，
並提供單純形、伽瑪、卜瓦松分布的精確動差與界限，作為測試對照值。

Author: Leon Lu
Created: 2025-01-24
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import integrate, special

from .errors import (
    InvalidParameterError,
    require_positive,
    require_positive_int,
)

logger = logging.getLogger(__name__)

_UINT64_MAX = 2 ** 64 - 1

# 單純形最大值動差界限常數 max{6, 4 ln3 / ln2}
MAX_MOMENT_CONSTANT = max(6.0, 4.0 * math.log(3.0) / math.log(2.0))

# 單純形和為一的容忍值
SIMPLEX_SUM_TOL = 1e-12


@dataclass(frozen=True)
class RngState:
    """
    亂數流識別

    相同的 (seed, stream_id) 重現完全相同的取樣序列；
    不同的 stream_id 對應統計上獨立的亂數流。

    Attributes:
        seed: 64位元非負整數種子
        stream_id: 64位元非負整數流編號 (每個複本一條流)
    """
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ('seed', 'stream_id'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidParameterError(f"{name} 必須是整數: {value!r}")
            if not 0 <= int(value) <= _UINT64_MAX:
                raise InvalidParameterError(f"{name} 必須在 [0, 2^64) 範圍內: {value!r}")

    def generator(self) -> np.random.Generator:
        """建立此亂數流的 Philox 產生器"""
        sequence = np.random.SeedSequence([int(self.seed), int(self.stream_id)])
        return np.random.Generator(np.random.Philox(sequence))

    def spawn(self, stream_id: int) -> "RngState":
        """以相同種子取得另一條流"""
        return RngState(self.seed, stream_id)


RngLike = Union[RngState, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    """
    取得 numpy 產生器

    傳入 RngState 時每次都從流的起點開始；傳入 Generator 時沿用其狀態。
    """
    if isinstance(rng, RngState):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidParameterError(f"不支援的亂數來源類型: {type(rng).__name__}")


def split_generators(rng: RngLike, count: int) -> List[np.random.Generator]:
    """
    分裂出 count 條互不重疊的子亂數流

    同一 RngState 每次分裂得到相同的子流；傳入 Generator 時使用 Generator.spawn。
    """
    count = require_positive_int('count', count)
    if isinstance(rng, RngState):
        sequence = np.random.SeedSequence([int(rng.seed), int(rng.stream_id)])
        return [np.random.Generator(np.random.Philox(child)) for child in sequence.spawn(count)]
    return as_generator(rng).spawn(count)


@dataclass(frozen=True)
class SimplexSample:
    """
    單純形 {u > 0, Σu = 1} 上的均勻樣本

    Attributes:
        n: 維度
        u: 長度 n 的正實數向量
    """
    n: int
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape != (self.n,):
            raise InvalidParameterError(f"單純形樣本長度錯誤: 期望 {self.n}, 實際 {u.shape}")
        if np.any(u <= 0):
            raise InvalidParameterError("單純形樣本必須全部為正")
        if abs(u.sum() - 1.0) > SIMPLEX_SUM_TOL:
            raise InvalidParameterError(f"單純形樣本總和偏離 1: {u.sum()!r}")
        u.setflags(write=False)
        object.__setattr__(self, 'u', u)


# ===================
# 分布取樣
# ===================

def exponential_quantile(u: Union[float, np.ndarray], rate: float) -> Union[float, np.ndarray]:
    """指數分布反累積分布函數 -ln(1-u)/rate"""
    rate = require_positive('rate', rate)
    values = np.asarray(u, dtype=float)
    if np.any((values < 0) | (values >= 1)):
        raise InvalidParameterError(f"分位數必須在 [0, 1) 範圍內: {u!r}")
    result = -np.log1p(-values) / rate
    return float(result) if result.ndim == 0 else result


def sample_exponential(rng: RngLike, rate: float, size: Optional[Union[int, Tuple[int, ...]]] = None):
    """
    取樣 Exp(rate)

    Args:
        rng: 亂數來源
        rate: 速率參數 (> 0)
        size: 取樣數量；None 時回傳單一浮點數

    Returns:
        正實數或陣列，平均值 1/rate

    Raises:
        InvalidParameterError: rate ≤ 0
    """
    rate = require_positive('rate', rate)
    draws = as_generator(rng).exponential(1.0 / rate, size)
    return float(draws) if size is None else draws


def sample_poisson(rng: RngLike, mean: float, size: Optional[Union[int, Tuple[int, ...]]] = None):
    """
    取樣 Po(mean)

    Raises:
        InvalidParameterError: mean ≤ 0
    """
    mean = require_positive('mean', mean)
    draws = as_generator(rng).poisson(mean, size)
    return int(draws) if size is None else draws.astype(np.int64)


def sample_gamma(rng: RngLike, shape: int, rate: float,
                 size: Optional[Union[int, Tuple[int, ...]]] = None):
    """
    取樣 Gamma(shape, rate)，平均 shape/rate，變異數 shape/rate²

    Raises:
        InvalidParameterError: shape 不是正整數或 rate ≤ 0
    """
    shape = require_positive_int('shape', shape)
    rate = require_positive('rate', rate)
    draws = as_generator(rng).gamma(shape, 1.0 / rate, size)
    return float(draws) if size is None else draws


def sample_simplex_batch(rng: RngLike, n: int, size: int) -> np.ndarray:
    """
    批次取樣單純形均勻分布

    以 n 個獨立 Exp(1) 正規化得到，回傳形狀 (size, n) 的陣列。
    """
    n = require_positive_int('n', n)
    size = require_positive_int('size', size)
    if n == 1:
        return np.ones((size, 1))
    draws = as_generator(rng).standard_exponential((size, n))
    return draws / draws.sum(axis=1, keepdims=True)


def sample_simplex(rng: RngLike, n: int) -> SimplexSample:
    """
    取樣單純形均勻分布 (密度 (n-1)! 對 δ 約束曲面測度)

    Args:
        rng: 亂數來源
        n: 維度 (≥ 1)；n=1 時回傳唯一點 (1)

    Raises:
        InvalidParameterError: n = 0
    """
    n = require_positive_int('n', n)
    if n == 1:
        return SimplexSample(1, np.ones(1))
    draws = as_generator(rng).standard_exponential(n)
    return SimplexSample(n, draws / draws.sum())


# ===================
# 精確動差對照
# ===================

def simplex_moment_oracle(n: int, p: int, exact: bool = False) -> Union[float, Fraction]:
    """
    單純形座標的 p 階動差 ⟨u_i^p⟩ = p! / ∏_{k=0}^{p-1}(n+k)

    Args:
        n: 維度 (≥ 1)
        p: 動差階數 (≥ 1)
        exact: 是否回傳有理數

    Returns:
        動差值 (預設雙精度)
    """
    n = require_positive_int('n', n)
    p = require_positive_int('p', p)
    denominator = 1
    for k in range(p):
        denominator *= n + k
    value = Fraction(math.factorial(p), denominator)
    return value if exact else float(value)


def simplex_cross_moment(n: int, exact: bool = False) -> Union[float, Fraction]:
    """相異座標交叉動差 ⟨u_i u_j⟩ = 1/(n(n+1))，n ≥ 2"""
    n = require_positive_int('n', n, minimum=2)
    value = Fraction(1, n * (n + 1))
    return value if exact else float(value)


def simplex_exp_moment(n: int, theta: float) -> float:
    """
    單純形座標的指數動差 ⟨e^{θ u_i}⟩ = (n-1) e^θ ∫₀¹ x^{n-2} e^{-θx} dx

    以正規化不完全伽瑪函數計算積分，n ≥ 2。
    """
    n = require_positive_int('n', n, minimum=2)
    theta = float(theta)
    if n == 2:
        # ∫₀¹ e^{-θx} dx
        integral = 1.0 if theta == 0 else -math.expm1(-theta) / theta
        return math.exp(theta) * integral
    if theta == 0:
        return 1.0
    if theta < 0:
        # 負 θ 直接數值積分
        integral, _ = integrate.quad(lambda x: x ** (n - 2) * math.exp(-theta * x), 0.0, 1.0)
        return float((n - 1) * math.exp(theta) * integral)
    # Γ(n-1) P(n-1, θ) / θ^{n-1}
    log_integral = special.gammaln(n - 1) + math.log(special.gammainc(n - 1, theta)) - (n - 1) * math.log(theta)
    return float((n - 1) * math.exp(theta + log_integral))


def simplex_exp_moment_bound(n: int) -> float:
    """⟨e^{(n-1) u_i}⟩ 的上界 3√(n-1)"""
    n = require_positive_int('n', n, minimum=2)
    return 3.0 * math.sqrt(n - 1)


def simplex_max_moment_bound(n: int) -> float:
    """⟨max_i u_i⟩ 的上界 max{6, 4 ln3/ln2}·ln(n+1)/n"""
    n = require_positive_int('n', n)
    return MAX_MOMENT_CONSTANT * math.log(n + 1) / n


def gamma_moment_oracle(m: int, theta: float, k: int) -> float:
    """Gamma(m, θ) 的 k 階動差 θ^{-k}(m+k-1)!/(m-1)!"""
    m = require_positive_int('m', m)
    theta = require_positive('theta', theta)
    k = require_positive_int('k', k)
    return math.exp(special.gammaln(m + k) - special.gammaln(m) - k * math.log(theta))


def gamma_centered_sixth_moment(m: int) -> float:
    """Z ~ Gamma(m, m) 時 E|1-Z|^6 = (15m² + 130m + 120)/m⁵"""
    m = require_positive_int('m', m)
    return (15.0 * m ** 2 + 130.0 * m + 120.0) / m ** 5


def poisson_moments(mean: float) -> Tuple[float, float]:
    """卜瓦松分布一階與二階動差 (λ, λ²+λ)"""
    mean = require_positive('mean', mean)
    return mean, mean ** 2 + mean


def poisson_inverse_moment_constant(p: float) -> float:
    """C_p = 2^{p(p+2)/2}"""
    p = require_positive('p', p)
    return 2.0 ** (p * (p + 2.0) / 2.0)


def poisson_inverse_moment_bound(lam: float, p: float) -> float:
    """
    卜瓦松反動差界限 ⟨N^{-p} 1{N≥1}⟩ ≤ C_p/λ^p

    Args:
        lam: 卜瓦松參數 (> 0)
        p: 動差階數 (> 0)
    """
    lam = require_positive('lam', lam)
    return poisson_inverse_moment_constant(p) / lam ** p


def poisson_log_moment_bound(lam: float, p: float) -> float:
    """對數變體 ⟨N^{-p} ln(N+1) 1{N≥1}⟩ ≤ C_{2p}^{1/2} ln(λ+3)/λ^p"""
    lam = require_positive('lam', lam)
    p = require_positive('p', p)
    return math.sqrt(poisson_inverse_moment_constant(2.0 * p)) * math.log(lam + 3.0) / lam ** p


def poisson_pair_deviation_bound(lam: float, sharp: bool = False) -> float:
    """
    ⟨(2⌊N/2⌋/λ - 1)² 1{N≥2}⟩ 的上界

    Args:
        lam: 卜瓦松參數
        sharp: True 時回傳 e^{-λ}(2-λ)²/2 + 9/λ，否則 35/λ
    """
    lam = require_positive('lam', lam)
    if sharp:
        return math.exp(-lam) * (2.0 - lam) ** 2 / 2.0 + 9.0 / lam
    return 35.0 / lam


def gamma_uniform_decomposition(u, v):
    """
    兩個獨立同分布指數變數的和差分解

    x = (u-v)/(u+v) ∈ [-1, 1]，y = u+v。對 Exp(λ) 輸入，x 服從 [-1,1] 均勻分布，
    y 服從 Gamma(2, λ)，且兩者獨立。支援陣列輸入。

    Raises:
        InvalidParameterError: 輸入非正
    """
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if np.any(~(u_arr > 0)) or np.any(~(v_arr > 0)):
        raise InvalidParameterError("和差分解的輸入必須全部為正")
    total = u_arr + v_arr
    diff = (u_arr - v_arr) / total
    if total.ndim == 0:
        return float(diff), float(total)
    return diff, total
