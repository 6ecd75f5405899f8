"""
解析界限

主界限右側、獨立耦合的封閉形式、各耦合分量界限、時間平均動差差距界限，
以及補充的分量界限。所有常數皆由呼叫端提供，只保證函數形式。

Author: Leon Lu
Created: 2025-01-24
"""

import logging
import math
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy import special

from .errors import (
    InvalidParameterError,
    NumericResolutionError,
    require_non_negative,
    require_positive,
)
from .report_models import BoundReport
from .telegraph import gaussian_abs_moment

logger = logging.getLogger(__name__)

# 平方根內可容許的負值 (捨入誤差)
_NEGATIVE_TOL = -1e-14

DEFAULT_CONSTANTS: Dict[str, float] = {'C': 1.0, 'k1': 1.0, 'k2': 1.0, 'k3': 1.0, 'C_prime': 1.0}


def _scaling(T_star: float, L_star: float) -> Tuple[float, float, float]:
    T_star = require_positive('T_star', T_star)
    L_star = require_positive('L_star', L_star)
    return T_star, L_star, T_star / L_star ** 2


def main_bound_rhs(T_star: float, L_star: float, C: float = 1.0) -> float:
    """C √ζ T★^{-1/4} (√ln(T★+3) + T★^{-3/4}) + C/L★"""
    T_star, L_star, zeta = _scaling(T_star, L_star)
    C = require_positive('C', C)
    return (C * math.sqrt(zeta) * T_star ** -0.25
            * (math.sqrt(math.log(T_star + 3.0)) + T_star ** -0.75)
            + C / L_star)


def independent_cost_squared(T_star: float, L_star: float) -> float:
    """
    獨立耦合的平均成本 (1/(4T★L★²))(1-e^{-2T★}) - 1/(2L★²) + T★/L★²

    T★ 很小時以級數 (T/2 + T²/3 - T³/6 + T⁴/15)/L★² 避免相消。
    """
    T_star, L_star, _ = _scaling(T_star, L_star)
    if T_star < 1e-3:
        t = T_star
        return (t / 2.0 + t ** 2 / 3.0 - t ** 3 / 6.0 + t ** 4 / 15.0) / L_star ** 2
    return (-math.expm1(-2.0 * T_star) / (4.0 * T_star) - 0.5 + T_star) / L_star ** 2


def crude_and_exact_independent(T_star: float, L_star: float) -> Tuple[float, float]:
    """
    獨立耦合的粗略界限與精確值 (兩者相同)

    Raises:
        NumericResolutionError: 平方根內數值為負且超過捨入容忍值
    """
    value = independent_cost_squared(T_star, L_star)
    if value < _NEGATIVE_TOL:
        raise NumericResolutionError(f"獨立耦合成本為負: {value!r}",
                                     {'T_star': T_star, 'L_star': L_star})
    crude = math.sqrt(max(value, 0.0))
    return crude, crude


def component_bounds(T_star: float, L_star: float,
                     kappas: Tuple[float, float, float] = (1.0, 1.0, 1.0)) -> Tuple[float, float, float]:
    """
    三個耦合分量的界限

    Returns:
        (擲幣, 同步, KMT):
        κ₁√ζ T★^{-1/4}√ln(T★+3) + κ₁/L★,
        κ₂√ζ T★^{-1/4}(1 + T★^{-3/4}),
        κ₃√ζ T★^{-1/4}(1 + T★^{-3/4})
    """
    T_star, L_star, zeta = _scaling(T_star, L_star)
    k1, k2, k3 = (require_positive(name, k) for name, k in zip(('k1', 'k2', 'k3'), kappas))
    common = math.sqrt(zeta) * T_star ** -0.25
    coinflip = k1 * common * math.sqrt(math.log(T_star + 3.0)) + k1 / L_star
    synchronous = k2 * common * (1.0 + T_star ** -0.75)
    kmt = k3 * common * (1.0 + T_star ** -0.75)
    return coinflip, synchronous, kmt


def tilde_z_vs_z_bound(T_star: float, L_star: float) -> float:
    """Z̃ 與 Z 的平方距離界限 28ζT★^{-1/2}(1 + T★^{-1/2})"""
    T_star, _, zeta = _scaling(T_star, L_star)
    return 28.0 * zeta * T_star ** -0.5 * (1.0 + T_star ** -0.5)


def y_vs_tilde_z_bound(T_star: float, L_star: float, compact: bool = False) -> float:
    """
    Y 與 Z̃ 的平方距離界限

    完整形式 39ζT★^{-1/2} + 38ζe^{-T★}(T★ + T★²)；compact 時為 115ζT★^{-1/2}。
    """
    T_star, _, zeta = _scaling(T_star, L_star)
    if compact:
        return 115.0 * zeta * T_star ** -0.5
    return 39.0 * zeta * T_star ** -0.5 + 38.0 * zeta * math.exp(-T_star) * (T_star + T_star ** 2)


def kmt_bridge_term_bound(T_star: float, L_star: float) -> float:
    """KMT 鏈中布朗橋項 ½ζT★²e^{-T★} + 2^{7/2}ζ/T★"""
    T_star, _, zeta = _scaling(T_star, L_star)
    return 0.5 * zeta * T_star ** 2 * math.exp(-T_star) + 2.0 ** 3.5 * zeta / T_star


def moment_gap_constants(p: float, T_star: float, L_star: float,
                         C_r: Optional[float] = None) -> Tuple[float, float]:
    """
    時間平均動差差距的常數 (C₁, C₂)

    p = 1 時 C₁ = C₂ = 1；否則 r = 2(p-1) 且
    C₁² = C̃(r) T★^{p-1}/(p L★^{2(p-1)}) + C′ T★^{p-2}/((p-1) L★^{2(p-1)})，
    C₂² = 2^{p-1} Γ((2p-1)/2)/(p√π) · T★^{p-1}/L★^{2(p-1)}。

    Raises:
        InvalidParameterError: p ≤ 1/2 (權重的二階動差發散)
    """
    p = require_positive('p', p)
    T_star, L_star, _ = _scaling(T_star, L_star)
    if p == 1.0:
        if C_r is not None:
            logger.warning(f"p=1 時不使用 C′，忽略提供的值 {C_r}")
        return 1.0, 1.0
    if p <= 0.5:
        raise InvalidParameterError(f"p ≤ 1/2 時權重二階動差發散: p={p}")

    C_prime = require_non_negative('C_r', 1.0 if C_r is None else C_r)
    r = 2.0 * (p - 1.0)
    spatial = L_star ** (2.0 * (p - 1.0))
    c1_squared = (gaussian_abs_moment(r) * T_star ** (p - 1.0) / (p * spatial)
                  + C_prime * T_star ** (p - 2.0) / ((p - 1.0) * spatial))
    c2_squared = (2.0 ** (p - 1.0) * math.exp(special.gammaln((2.0 * p - 1.0) / 2.0))
                  / (p * math.sqrt(math.pi)) * T_star ** (p - 1.0) / spatial)
    # p < 1 時第二項為負，截斷於 0
    return math.sqrt(max(c1_squared, 0.0)), math.sqrt(max(c2_squared, 0.0))


def moment_gap_bound(p: float, T_star: float, L_star: float,
                     C_r: Optional[float], w2_value: float) -> float:
    """時間平均 p 階動差差距界限 2p·max{C₁, C₂}·w2"""
    w2_value = require_non_negative('w2_value', w2_value)
    c1, c2 = moment_gap_constants(p, T_star, L_star, C_r)
    return 2.0 * float(p) * max(c1, c2) * w2_value


def w_lipschitz_violations(p: float, x: np.ndarray, y: np.ndarray, slack: float = 1e-12) -> int:
    """
    計算 ||x|^p - |y|^p| ≤ p(|x|^{p-1} + |y|^{p-1})|x - y| 的違反次數

    slack 為相對容忍值 (相對於 max(1, 右側))。
    """
    p = require_positive('p', p)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax, ay = np.abs(x), np.abs(y)
    lhs = np.abs(ax ** p - ay ** p)
    with np.errstate(divide='ignore', invalid='ignore'):
        rhs = p * (ax ** (p - 1.0) + ay ** (p - 1.0)) * np.abs(x - y)
    # 0·∞ 只在 x = y = 0 出現，此時左側為 0
    rhs = np.nan_to_num(rhs, nan=np.inf)
    return int(np.sum(lhs > rhs + slack * np.maximum(1.0, rhs)))


def bound_report(T_star: float, L_star: float,
                 constants: Optional[Mapping[str, float]] = None) -> BoundReport:
    """評估所有界限並建立 BoundReport"""
    used = dict(DEFAULT_CONSTANTS)
    used.update({k: float(v) for k, v in (constants or {}).items()})
    crude, _ = crude_and_exact_independent(T_star, L_star)
    coinflip, synchronous, kmt = component_bounds(T_star, L_star, (used['k1'], used['k2'], used['k3']))
    return BoundReport(
        T_star=T_star,
        L_star=L_star,
        main_rhs=main_bound_rhs(T_star, L_star, used['C']),
        crude_rhs=crude,
        coinflip_rhs=coinflip,
        synchronous_rhs=synchronous,
        kmt_rhs=kmt,
        constants_used=used,
        supplementary={
            'tilde_z_vs_z': tilde_z_vs_z_bound(T_star, L_star),
            'y_vs_tilde_z': y_vs_tilde_z_bound(T_star, L_star),
            'y_vs_tilde_z_compact': y_vs_tilde_z_bound(T_star, L_star, compact=True),
            'kmt_bridge_term': kmt_bridge_term_bound(T_star, L_star),
        },
    )
