"""
耦合路徑對取樣器

實作獨立耦合、擲幣耦合、同步耦合與 KMT 耦合，以及把三者串接成
電報過程與布朗運動之間單一耦合的鏈式耦合，並提供布朗路徑補點。

Author: Leon Lu
Created: 2025-01-24
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import special

from .errors import (
    InvalidParameterError,
    ResourceLimitError,
    require_non_negative,
    require_positive_int,
)
from .kmt import KmtCoupler
from .paths import PiecewisePath
from .randkit import RngLike, SimplexSample, as_generator, sample_simplex, split_generators
from .surrogate import (
    SurrogateInputs,
    WalkIncrements,
    build_Y,
    build_Z,
    build_Ztilde,
    sample_surrogate_inputs,
)
from .telegraph import MAX_JUMPS, ScalingParams, WaitingTimes, path_from_waiting_times, sample_telegraph

logger = logging.getLogger(__name__)

# 擲幣耦合拒絕取樣上限
MAX_REJECTIONS = 1_000_000

# 布朗路徑評估的均勻網格點數
DEFAULT_GRID_POINTS = 1024


class CouplingTag(str, Enum):
    """耦合類型"""
    INDEPENDENT = "independent"
    COINFLIP = "coinflip"
    SYNCHRONOUS = "synchronous"
    KMT = "kmt"
    CHAIN = "chain"


class BranchTag(str, Enum):
    """擲幣耦合分支"""
    DIAGONAL = "diagonal"
    OFFDIAGONAL = "offdiagonal"
    NA = "n/a"


class SynchronousPair(str, Enum):
    """同步耦合可取得的路徑對"""
    Y_VS_ZTILDE = "Y-vs-Ztilde"
    ZTILDE_VS_Z = "Ztilde-vs-Z"
    Y_VS_Z = "Y-vs-Z"


@dataclass(frozen=True, eq=False)
class CoupledPathPair:
    """
    以共同或耦合的亂數建立的路徑對

    Attributes:
        left: 左路徑
        right: 右路徑
        coupling_tag: 耦合類型
        branch_tag: 擲幣分支 (其他耦合為 n/a)
        metadata: 取樣來源資訊 (K、r1、r2 等)
    """
    left: PiecewisePath
    right: PiecewisePath
    coupling_tag: CouplingTag
    branch_tag: BranchTag = BranchTag.NA
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if abs(self.left.horizon - self.right.horizon) > 1e-12 * self.left.horizon:
            raise InvalidParameterError(
                f"路徑對的時間區間不一致: {self.left.horizon} vs {self.right.horizon}"
            )

    @property
    def horizon(self) -> float:
        return self.left.horizon

    def to_dict(self) -> Dict[str, Any]:
        """轉換為可重播的字典"""
        return {
            'coupling_tag': self.coupling_tag.value,
            'branch_tag': self.branch_tag.value,
            'metadata': dict(self.metadata),
            'left': self.left.to_dict(),
            'right': self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CoupledPathPair":
        return cls(
            left=PiecewisePath.from_dict(data['left']),
            right=PiecewisePath.from_dict(data['right']),
            coupling_tag=CouplingTag(data['coupling_tag']),
            branch_tag=BranchTag(data.get('branch_tag', BranchTag.NA.value)),
            metadata=dict(data.get('metadata', {})),
        )


# ===================
# 布朗路徑
# ===================

def uniform_grid(T: float, points: int) -> np.ndarray:
    """[0, T] 上含端點的 points+1 個均勻點"""
    return np.linspace(0.0, T, require_positive_int('points', points) + 1)


def brownian_fill(grid_values: np.ndarray, grid_times: np.ndarray, sigma2: float,
                  eval_times: np.ndarray, rng: RngLike,
                  horizon: Optional[float] = None) -> PiecewisePath:
    """
    在給定格點值之間以布朗橋補點

    自由布朗運動 W 扣除其在格點上的線性插值後加上格點值的線性插值，
    得到格點間條件獨立的布朗橋；最後一個格點之後延續為自由布朗運動。

    Args:
        grid_values: 格點值 (第一個必須為 0)
        grid_times: 從 0 開始嚴格遞增的格點時間
        sigma2: 擴散係數 (≥ 0)
        eval_times: 評估時間
        rng: 亂數來源
        horizon: 時間區間終點 (預設為最後一個格點時間)

    Returns:
        PiecewisePath: 取樣類型路徑

    Raises:
        InvalidParameterError: 格點不合法或評估時間超出 [0, horizon]
    """
    values = np.asarray(grid_values, dtype=float).reshape(-1)
    times = np.asarray(grid_times, dtype=float).reshape(-1)
    if values.shape != times.shape or times.size == 0:
        raise InvalidParameterError("格點值與格點時間長度不一致")
    if times[0] != 0.0 or values[0] != 0.0:
        raise InvalidParameterError("格點必須從 (0, 0) 開始")
    if np.any(np.diff(times) <= 0):
        raise InvalidParameterError("格點時間必須嚴格遞增")
    sigma2 = require_non_negative('sigma2', sigma2)
    horizon = float(times[-1]) if horizon is None else float(horizon)
    if horizon < times[-1] or horizon <= 0:
        raise InvalidParameterError(f"時間區間終點 {horizon} 早於最後格點 {times[-1]}")

    targets = np.asarray(eval_times, dtype=float).reshape(-1)
    if np.any(targets < 0) or np.any(targets > horizon):
        raise InvalidParameterError(f"評估時間超出 [0, {horizon}]")

    merged = np.unique(np.concatenate((times, targets, [0.0, horizon])))
    gen = as_generator(rng)
    steps = gen.standard_normal(merged.size - 1) * np.sqrt(sigma2 * np.diff(merged))
    free = np.concatenate(([0.0], np.cumsum(steps)))
    free_at_grid = np.interp(times, merged, free)
    path = free - np.interp(merged, times, free_at_grid) + np.interp(merged, times, values)
    return PiecewisePath.sampled(merged, path, horizon)


def independent_pair(rng: RngLike, params: ScalingParams,
                     grid_points: int = DEFAULT_GRID_POINTS,
                     max_jumps: int = MAX_JUMPS) -> CoupledPathPair:
    """
    獨立耦合: L^{-1}X 與擴散係數 σ² 的布朗運動，使用互不重疊的子亂數流

    布朗路徑在電報路徑斷點與均勻網格的聯集上取樣。
    """
    telegraph_gen, brownian_gen = split_generators(rng, 2)
    left = sample_telegraph(telegraph_gen, params, max_jumps=max_jumps).scale(1.0 / params.L)
    eval_times = np.union1d(left.breakpoints, uniform_grid(params.T, grid_points))
    right = brownian_fill(np.zeros(1), np.zeros(1), params.sigma2, eval_times,
                          brownian_gen, horizon=params.T)
    return CoupledPathPair(left, right, CouplingTag.INDEPENDENT)


# ===================
# 擲幣耦合
# ===================

def coinflip_log_g(r, n: int):
    """log g(r) = ln n! - n ln n + n r (0 < r ≤ 1)，其餘為 -inf"""
    n = require_positive_int('n', n)
    r_arr = np.asarray(r, dtype=float)
    inside = (r_arr > 0) & (r_arr <= 1)
    value = np.where(inside, special.gammaln(n + 1.0) - n * math.log(n) + n * r_arr, -np.inf)
    return float(value) if value.ndim == 0 else value


def coinflip_threshold(n: int) -> float:
    """g(r★) = 1 的根 r★ = (n ln n - ln n!)/n"""
    n = require_positive_int('n', n)
    return (n * math.log(n) - float(special.gammaln(n + 1.0))) / n


def coinflip_normaliser(n: int) -> float:
    """非對角分支機率 Z = ∫ ν₂ (1-g)₊ = F₂(r★) - r★^n + 1 - F₂(1)"""
    n = require_positive_int('n', n)
    r_star = coinflip_threshold(n)
    below = float(special.gammainc(n, n * r_star))
    above = float(special.gammaincc(n, n * 1.0))
    return below - r_star ** n + above


def coinflip_diagonal_probability(n: int) -> float:
    """對角分支機率 ∫ ν₂ min{1, g} = 1 - Z"""
    return 1.0 - coinflip_normaliser(n)


@dataclass(frozen=True)
class CoinFlipDraw:
    """
    擲幣耦合的一次抽樣

    Attributes:
        n: 跳躍數
        r1: ν₁ 邊際 (0, 1]
        r2: ν₂ = Gamma(n, n) 邊際
        u: 共用的單純形樣本
        branch: 對角或非對角
    """
    n: int
    r1: float
    r2: float
    u: SimplexSample
    branch: BranchTag

    def __post_init__(self):
        if not 0.0 < self.r1 <= 1.0:
            raise InvalidParameterError(f"r1 必須在 (0, 1]: {self.r1}")
        if not self.r2 > 0.0:
            raise InvalidParameterError(f"r2 必須為正: {self.r2}")
        if self.branch == BranchTag.DIAGONAL and self.r1 != self.r2:
            raise InvalidParameterError("對角分支的 r1 與 r2 必須相等")
        if self.u.n != self.n:
            raise InvalidParameterError(f"單純形樣本維度 {self.u.n} 與 n={self.n} 不一致")


def _accept_log(gen: np.random.Generator, log_probability: float) -> bool:
    return math.log(max(gen.random(), 1e-300)) < log_probability


def coinflip_r_pair(rng: RngLike, n: int,
                    max_rejections: int = MAX_REJECTIONS) -> Tuple[float, float, BranchTag]:
    """
    擲幣耦合 (r1, r2)

    r ~ ν₂ 並以機率 min{1, g(r)} 取對角 (r, r)；否則 r1 由 ν₁ 提議、以 (1-1/g)₊ 接受，
    r2 由 ν₂ 提議、以 (1-g)₊ 接受。

    Raises:
        ResourceLimitError: 拒絕次數超過 max_rejections
    """
    n = require_positive_int('n', n)
    gen = as_generator(rng)
    r = float(gen.gamma(n, 1.0 / n))
    if _accept_log(gen, min(0.0, coinflip_log_g(r, n))):
        return r, r, BranchTag.DIAGONAL

    rejections = 0
    while True:
        r1 = float(gen.random() ** (1.0 / n))
        g = math.exp(coinflip_log_g(r1, n)) if r1 > 0 else 0.0
        if g > 1.0 and gen.random() < 1.0 - 1.0 / g:
            break
        rejections += 1
        if rejections > max_rejections:
            raise ResourceLimitError(f"擲幣耦合 r1 拒絕次數超過上限 {max_rejections} (n={n})")

    while True:
        r2 = float(gen.gamma(n, 1.0 / n))
        g = math.exp(coinflip_log_g(r2, n))
        if g < 1.0 and gen.random() < 1.0 - g:
            break
        rejections += 1
        if rejections > max_rejections:
            raise ResourceLimitError(f"擲幣耦合 r2 拒絕次數超過上限 {max_rejections} (n={n})")

    return r1, r2, BranchTag.OFFDIAGONAL


def sample_coinflip_batch(rng: RngLike, n: int, size: int,
                          max_rejections: int = MAX_REJECTIONS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    向量化擲幣耦合抽樣 (供大量稽核使用)

    Returns:
        (r1, r2, diagonal) 三個長度 size 的陣列
    """
    n = require_positive_int('n', n)
    size = require_positive_int('size', size)
    gen = as_generator(rng)

    r = gen.gamma(n, 1.0 / n, size)
    diagonal = np.log(np.maximum(gen.random(size), 1e-300)) < np.minimum(0.0, coinflip_log_g(r, n))
    r1 = r.copy()
    r2 = r.copy()

    def fill(target: np.ndarray, mask: np.ndarray, propose, accept):
        missing = np.flatnonzero(mask)
        rounds = 0
        while missing.size:
            proposal = propose(missing.size)
            ok = gen.random(missing.size) < accept(proposal)
            target[missing[ok]] = proposal[ok]
            missing = missing[~ok]
            rounds += 1
            if rounds > max_rejections:
                raise ResourceLimitError(f"批次擲幣耦合拒絕取樣超過上限 {max_rejections} (n={n})")

    def accept_r1(x):
        g = np.exp(coinflip_log_g(x, n))
        return np.where(g > 1.0, 1.0 - 1.0 / np.maximum(g, 1.0), 0.0)

    def accept_r2(x):
        return np.maximum(1.0 - np.exp(coinflip_log_g(x, n)), 0.0)

    off = ~diagonal
    fill(r1, off, lambda k: gen.random(k) ** (1.0 / n), accept_r1)
    fill(r2, off, lambda k: gen.gamma(n, 1.0 / n, k), accept_r2)
    return r1, r2, diagonal


def draw_coinflip(rng: RngLike, n: int, max_rejections: int = MAX_REJECTIONS) -> CoinFlipDraw:
    """抽取 (r1, r2, 分支) 與共用單純形樣本"""
    gen = as_generator(rng)
    r1, r2, branch = coinflip_r_pair(gen, n, max_rejections)
    return CoinFlipDraw(n, r1, r2, sample_simplex(gen, n), branch)


def _scaled_telegraph(gaps: np.ndarray, params: ScalingParams) -> PiecewisePath:
    d = WaitingTimes(gaps, 2.0 * params.T)
    return path_from_waiting_times(d, params.v0, params.T).scale(1.0 / params.L)


def coinflip_pair(rng: RngLike, params: ScalingParams,
                  max_rejections: int = MAX_REJECTIONS) -> CoupledPathPair:
    """
    擲幣耦合路徑對

    K ~ Po(T★)；K = 0 時兩條路徑皆為射線 v0 t/L。否則 left = L^{-1}X(·; T r1 u)，
    right = L^{-1}X(·; T r2 u)，對角分支時兩者相同。
    """
    gen = as_generator(rng)
    K = int(gen.poisson(params.T_star))
    if K == 0:
        ray = PiecewisePath.ray(params.v0 / params.L, params.T)
        return CoupledPathPair(ray, ray, CouplingTag.COINFLIP, BranchTag.NA, {'K': 0})

    draw = draw_coinflip(gen, K, max_rejections)
    left = _scaled_telegraph(params.T * draw.r1 * draw.u.u, params)
    if draw.branch == BranchTag.DIAGONAL:
        right = left
    else:
        right = _scaled_telegraph(params.T * draw.r2 * draw.u.u, params)
    metadata = {'K': K, 'r1': draw.r1, 'r2': draw.r2}
    return CoupledPathPair(left, right, CouplingTag.COINFLIP, draw.branch, metadata)


# ===================
# 同步耦合
# ===================

def synchronous_from_inputs(inputs: SurrogateInputs,
                            which: str = SynchronousPair.Y_VS_Z.value) -> CoupledPathPair:
    """以同一組輸入建立指定的路徑對"""
    try:
        kind = SynchronousPair(which)
    except ValueError:
        raise InvalidParameterError(f"未知的同步路徑對: {which}，可用: {[p.value for p in SynchronousPair]}")
    builders = {
        SynchronousPair.Y_VS_ZTILDE: (build_Y, build_Ztilde),
        SynchronousPair.ZTILDE_VS_Z: (build_Ztilde, build_Z),
        SynchronousPair.Y_VS_Z: (build_Y, build_Z),
    }
    first, second = builders[kind]
    return CoupledPathPair(first(inputs), second(inputs), CouplingTag.SYNCHRONOUS,
                           metadata={'K': inputs.n, 'pair': kind.value})


def synchronous_pair(rng: RngLike, params: ScalingParams,
                     which: str = SynchronousPair.Y_VS_Z.value) -> CoupledPathPair:
    """同步耦合: 一次抽取 (K, u) 同時餵給兩個建構函式"""
    return synchronous_from_inputs(sample_surrogate_inputs(rng, params), which)


# ===================
# KMT 耦合
# ===================

def _kmt_brownian(inputs: SurrogateInputs, gen: np.random.Generator, coupler: KmtCoupler,
                  eval_times: np.ndarray) -> Tuple[PiecewisePath, Dict[str, Any]]:
    """把 Z 的網格骨架耦合到布朗運動的網格值，再以布朗橋補點"""
    params = inputs.params
    pairs = inputs.n_pairs
    if pairs == 0:
        path = brownian_fill(np.zeros(1), np.zeros(1), params.sigma2, eval_times, gen,
                             horizon=params.T)
        return path, {'K': inputs.n, 'n_pairs': 0, 'skeleton_gap': 0.0}

    increments = WalkIncrements.from_inputs(inputs)
    xi = increments.eta_star * params.L_star
    snapshot = dict(coupler.stats)
    gaussian = coupler.couple(xi)
    counts = coupler.counts_since(snapshot)
    scale = math.sqrt(params.sigma2 * params.T / (2.0 * pairs))
    grid_times = params.T * np.arange(pairs + 1) / pairs
    grid_times[-1] = params.T
    grid_values = np.concatenate(([0.0], np.cumsum(gaussian) * scale))
    walk_values = np.concatenate(([0.0], np.cumsum(increments.eta_star)))
    path = brownian_fill(grid_values, grid_times, params.sigma2, eval_times, gen, horizon=params.T)
    metadata = {
        'K': inputs.n,
        'n_pairs': pairs,
        'skeleton_gap': float(np.max(np.abs(walk_values - grid_values))),
        'kmt_counts': counts,
    }
    return path, metadata


def kmt_pair(rng: RngLike, params: ScalingParams, mode: Optional[str] = None,
             coupler: Optional[KmtCoupler] = None,
             grid_points: int = DEFAULT_GRID_POINTS) -> CoupledPathPair:
    """
    KMT 耦合: left = Z 混合路徑，right = 擴散係數 σ² 的布朗運動

    先取 K ~ Po(T★)，在 K = n 條件下把 ξ = L★η* 的部分和與高斯部分和耦合，
    作為 B 在 ℓT/ñ 上的值。
    """
    if coupler is None:
        coupler = KmtCoupler(mode=mode or 'dyadic')
    elif mode is not None and coupler.mode.value != mode:
        raise InvalidParameterError(f"耦合器模式 {coupler.mode.value} 與指定模式 {mode} 不一致")
    input_gen, brownian_gen = split_generators(rng, 2)
    inputs = sample_surrogate_inputs(input_gen, params)
    left = build_Z(inputs)
    eval_times = np.union1d(left.breakpoints, uniform_grid(params.T, grid_points))
    right, metadata = _kmt_brownian(inputs, brownian_gen, coupler, eval_times)
    metadata['mode'] = coupler.mode.value
    return CoupledPathPair(left, right, CouplingTag.KMT, metadata=metadata)


def chain_pair(rng: RngLike, params: ScalingParams, mode: Optional[str] = None,
               coupler: Optional[KmtCoupler] = None,
               grid_points: int = DEFAULT_GRID_POINTS,
               max_rejections: int = MAX_REJECTIONS) -> CoupledPathPair:
    """
    鏈式耦合 X ↔ Y ↔ Z̃ ↔ Z ↔ B

    擲幣耦合給出 X (r1) 與 Y (r2)；Y、Z̃、Z 以 ũ = K r2 u 同步；Z 與 B 以 KMT 耦合。
    回傳 left = L^{-1}X，right = B。
    """
    if coupler is None:
        coupler = KmtCoupler(mode=mode or 'dyadic')
    coin_gen, brownian_gen = split_generators(rng, 2)
    K = int(coin_gen.poisson(params.T_star))

    if K == 0:
        left = PiecewisePath.ray(params.v0 / params.L, params.T)
        inputs = SurrogateInputs(0, np.zeros(0), params)
        branch = BranchTag.NA
        metadata: Dict[str, Any] = {}
    else:
        draw = draw_coinflip(coin_gen, K, max_rejections)
        left = _scaled_telegraph(params.T * draw.r1 * draw.u.u, params)
        inputs = SurrogateInputs(K, K * draw.r2 * draw.u.u, params)
        branch = draw.branch
        metadata = {'r1': draw.r1, 'r2': draw.r2}

    eval_times = np.union1d(left.breakpoints, uniform_grid(params.T, grid_points))
    right, kmt_metadata = _kmt_brownian(inputs, brownian_gen, coupler, eval_times)
    metadata.update(kmt_metadata)
    metadata['mode'] = coupler.mode.value
    return CoupledPathPair(left, right, CouplingTag.CHAIN, branch, metadata)
