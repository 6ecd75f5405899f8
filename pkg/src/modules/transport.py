"""
平均二次路徑成本與經驗 Wasserstein 估計

- 路徑成本: 合併斷點後逐段精確積分，另提供梯形法交叉驗證
- 上界估計: 任一構造耦合的 sqrt(平均成本)，以 joblib 平行取樣複本
- 下界估計: 各時間點邊際分布的一維最優傳輸，對時間平均

Author: Leon Lu
Created: 2025-01-24
"""

import logging
import math
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Union

import numpy as np
import ot
import pandas as pd
from joblib import Parallel, delayed
from scipy import integrate

from .couplings import CoupledPathPair
from .errors import (
    InvalidParameterError,
    ReportIOError,
    require_positive_int,
)
from .paths import PiecewisePath
from .randkit import RngState
from .report_models import Z_95, CostSample, EstimateWithCI

logger = logging.getLogger(__name__)

# 梯形法交叉驗證點數
DEFAULT_QUADRATURE_POINTS = 2 ** 16

# 下界估計的拔靴次數
DEFAULT_BOOTSTRAP = 20

CouplingSampler = Callable[[RngState], CoupledPathPair]


def _common_horizon(left: PiecewisePath, right: PiecewisePath, T: Optional[float]) -> float:
    horizon = left.horizon if T is None else float(T)
    for path in (left, right):
        if abs(path.horizon - horizon) > 1e-12 * horizon:
            raise InvalidParameterError(
                f"路徑時間區間 {path.horizon} 與 T={horizon} 不一致",
                {'horizon': path.horizon, 'T': horizon},
            )
    return horizon


def average_quadratic_cost(left: PiecewisePath, right: PiecewisePath,
                           T: Optional[float] = None) -> float:
    """
    平均二次成本 c₂ = (1/T) ∫₀ᵀ |X - Y|² dt

    兩條路徑在合併斷點之間皆為線性，差值 d 在每段上以 h(d₀² + d₀d₁ + d₁²)/3 精確積分。
    取樣類型路徑視為其線性插值。

    Raises:
        InvalidParameterError: 時間區間不一致
    """
    horizon = _common_horizon(left, right, T)
    merged = np.union1d(np.union1d(left.breakpoints, right.breakpoints), [horizon])
    merged = merged[merged <= horizon]
    starts, ends = merged[:-1], merged[1:]
    if starts.size == 0:
        return 0.0
    d0 = left.evaluate(starts) - right.evaluate(starts)
    d1 = left.left_limit(ends) - right.left_limit(ends)
    integral = float(np.sum((ends - starts) * (d0 * d0 + d0 * d1 + d1 * d1)) / 3.0)
    return max(integral, 0.0) / horizon


def pair_cost(pair: CoupledPathPair) -> float:
    """耦合路徑對的平均二次成本"""
    return average_quadratic_cost(pair.left, pair.right)


def trapezoid_cost(left: PiecewisePath, right: PiecewisePath, T: Optional[float] = None,
                   points: int = DEFAULT_QUADRATURE_POINTS) -> float:
    """以 points+1 個均勻點的梯形法計算 c₂ (交叉驗證用)"""
    horizon = _common_horizon(left, right, T)
    grid = np.linspace(0.0, horizon, require_positive_int('points', points) + 1)
    diff = left.evaluate(grid) - right.evaluate(grid)
    return float(integrate.trapezoid(diff * diff, grid)) / horizon


def wp_cost(left: PiecewisePath, right: PiecewisePath, T: Optional[float] = None,
            p: float = 2.0) -> float:
    """
    c₂^{p/2}，p ∈ [1, 2]

    Raises:
        InvalidParameterError: p 不在 [1, 2]
    """
    p = float(p)
    if not 1.0 <= p <= 2.0:
        raise InvalidParameterError(f"p 必須在 [1, 2]: {p}")
    return average_quadratic_cost(left, right, T) ** (p / 2.0)


def evaluation_grid(paths: Iterable[PiecewisePath], T: float, points: int = 1024) -> np.ndarray:
    """路徑斷點聯集加上 points+1 個均勻點"""
    grid = np.linspace(0.0, T, require_positive_int('points', points) + 1)
    for path in paths:
        grid = np.union1d(grid, path.breakpoints[path.breakpoints <= T])
    return grid


# ===================
# 複本取樣
# ===================

def _cost_batch(sampler: CouplingSampler, seed: int, start: int, stop: int,
                stream_offset: int) -> np.ndarray:
    return np.array([pair_cost(sampler(RngState(seed, stream_offset + i))) for i in range(start, stop)])


def sample_costs(sampler: CouplingSampler, n_replicates: int, seed: int = 0,
                 n_jobs: int = 1, batch_size: int = 256, stream_offset: int = 0) -> np.ndarray:
    """
    平行取樣 n_replicates 個路徑對的成本

    第 i 個複本使用 RngState(seed, stream_offset + i)，結果與平行切分方式無關。
    """
    n_replicates = require_positive_int('n_replicates', n_replicates)
    batch_size = require_positive_int('batch_size', batch_size)
    bounds = [(start, min(start + batch_size, n_replicates))
              for start in range(0, n_replicates, batch_size)]
    chunks = Parallel(n_jobs=n_jobs)(
        delayed(_cost_batch)(sampler, seed, start, stop, stream_offset) for start, stop in bounds
    )
    return np.concatenate(chunks)


def estimate_w2_from_costs(costs: Sequence[float]) -> EstimateWithCI:
    """sqrt(平均成本) 與 delta 方法的95%區間"""
    values = np.asarray(costs, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidParameterError("成本樣本必須為有限非負值")
    return EstimateWithCI.from_samples(values, transform='sqrt')


def empirical_w2_upper(sampler: CouplingSampler, n_replicates: int, seed: int = 0,
                       n_jobs: int = 1, batch_size: int = 256,
                       stream_offset: int = 0) -> EstimateWithCI:
    """
    以構造耦合估計 W₂ 上界

    Args:
        sampler: 接受 RngState 並回傳耦合路徑對的可序列化函式
        n_replicates: 複本數 (≥ 100)
        seed: 亂數種子
        n_jobs: joblib 平行工作數
        batch_size: 每個工作的複本數
    """
    n_replicates = require_positive_int('n_replicates', n_replicates, minimum=100)
    costs = sample_costs(sampler, n_replicates, seed, n_jobs, batch_size, stream_offset)
    estimate = estimate_w2_from_costs(costs)
    logger.debug(f"W₂ 上界估計: {estimate.point:.6g} ± {estimate.half_width_95:.3g} "
                 f"({n_replicates} 個複本)")
    return estimate


def empirical_wp_estimate(costs: Sequence[float], p: float) -> EstimateWithCI:
    """mean(c₂^{p/2})^{1/p} 與 delta 方法區間，p ∈ [1, 2]"""
    p = float(p)
    if not 1.0 <= p <= 2.0:
        raise InvalidParameterError(f"p 必須在 [1, 2]: {p}")
    values = np.asarray(costs, dtype=float) ** (p / 2.0)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    point = mean ** (1.0 / p)
    half = Z_95 * se * mean ** (1.0 / p - 1.0) / p if mean > 0 else 0.0
    return EstimateWithCI(point=point, half_width_95=half, n_replicates=values.size)


# ===================
# 邊際最優傳輸下界
# ===================

def _as_matrix(samples: Union[np.ndarray, Sequence[PiecewisePath]], grid: np.ndarray) -> np.ndarray:
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        if samples.shape[1] != grid.size:
            raise InvalidParameterError(f"樣本欄數 {samples.shape[1]} 與網格點數 {grid.size} 不一致")
        return samples.astype(float)
    return np.vstack([path.evaluate(grid) for path in samples])


def _marginal_w2_squared(a: np.ndarray, b: np.ndarray, grid: np.ndarray, T: float) -> float:
    per_time = np.atleast_1d(ot.wasserstein_1d(a, b, p=2))
    if grid.size == 1:
        return float(per_time[0])
    return float(integrate.trapezoid(per_time, grid)) / T


def empirical_w2_lower(samples_a: Union[np.ndarray, Sequence[PiecewisePath]],
                       samples_b: Union[np.ndarray, Sequence[PiecewisePath]],
                       grid: Sequence[float], T: Optional[float] = None,
                       bootstrap: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> EstimateWithCI:
    """
    時間邊際一維最優傳輸下界

    每個網格時間以排序配對計算 W₂²，再對時間平均並開根號；區間以固定種子拔靴估計。

    Args:
        samples_a: 路徑序列或形狀 (n, len(grid)) 的取值矩陣
        samples_b: 同上，樣本數必須相同
        grid: 時間網格
        T: 時間區間 (預設為網格最後一點)
        bootstrap: 拔靴次數 (0 表示不估計區間)
        seed: 拔靴亂數種子

    Raises:
        InvalidParameterError: 樣本數不同
    """
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InvalidParameterError("時間網格不能為空")
    a = _as_matrix(samples_a, grid)
    b = _as_matrix(samples_b, grid)
    if a.shape[0] != b.shape[0]:
        raise InvalidParameterError(f"兩組樣本數不同: {a.shape[0]} vs {b.shape[0]}")
    horizon = float(grid[-1]) if T is None else float(T)

    point = math.sqrt(max(_marginal_w2_squared(a, b, grid, horizon), 0.0))
    half = 0.0
    if bootstrap > 0 and a.shape[0] > 1:
        gen = RngState(seed, 0).generator()
        n = a.shape[0]
        replicas = np.empty(bootstrap)
        for k in range(bootstrap):
            ia = gen.integers(0, n, n)
            ib = gen.integers(0, n, n)
            replicas[k] = math.sqrt(max(_marginal_w2_squared(a[ia], b[ib], grid, horizon), 0.0))
        half = Z_95 * float(replicas.std(ddof=1))
    return EstimateWithCI(point=point, half_width_95=half, n_replicates=a.shape[0])


# ===================
# 成本樣本輸出
# ===================

def cost_samples_to_frame(samples: Sequence[CostSample]) -> pd.DataFrame:
    """成本樣本轉為 (replicate_id, coupling_tag, cost) 表格"""
    return pd.DataFrame(
        {
            'replicate_id': [s.replicate_id for s in samples],
            'coupling_tag': [s.coupling_tag for s in samples],
            'cost': [s.value for s in samples],
        },
        columns=['replicate_id', 'coupling_tag', 'cost'],
    )


def make_cost_samples(costs: Sequence[float], coupling_tag: str, start: int = 0) -> List[CostSample]:
    return [CostSample(value=float(c), coupling_tag=coupling_tag, replicate_id=start + i)
            for i, c in enumerate(costs)]


def write_cost_samples(samples: Sequence[CostSample], path: Union[str, Path],
                       float_format: str = "%.10g") -> Path:
    """
    寫出成本樣本CSV

    Raises:
        ReportIOError: 檔案寫入失敗
    """
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        cost_samples_to_frame(samples).to_csv(target, index=False, float_format=float_format)
    except OSError as e:
        raise ReportIOError(f"寫入成本樣本失敗: {target}: {e}", {'path': str(target)})
    logger.info(f"已寫入 {len(samples)} 筆成本樣本: {target}")
    return target
