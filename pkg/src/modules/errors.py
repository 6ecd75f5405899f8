"""
錯誤分類與參數驗證

定義所有模組共用的例外類別、錯誤分類與命令列退出碼對應，
並提供前置條件驗證輔助函式。

Author: Leon Lu
Created: 2025-01-25
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


class ErrorCategory(Enum):
    """錯誤分類枚舉"""
    INVALID_PARAMETER = "invalid_parameter"
    RESOURCE_LIMIT = "resource_limit"
    NUMERIC_RESOLUTION = "numeric_resolution"
    EXPERIMENT_FAILURE = "experiment_failure"
    IO_ERROR = "io_error"
    CONFIG_ERROR = "config_error"
    UNKNOWN_ERROR = "unknown_error"


class TelecouplerError(Exception):
    """所有模擬與驗證錯誤的基底類別"""

    category = ErrorCategory.UNKNOWN_ERROR

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class InvalidParameterError(TelecouplerError, ValueError):
    """參數不合法異常"""
    category = ErrorCategory.INVALID_PARAMETER


class ResourceLimitError(TelecouplerError):
    """資源上限異常 (跳躍數或拒絕取樣次數超過上限)"""
    category = ErrorCategory.RESOURCE_LIMIT


class NumericResolutionError(TelecouplerError, ArithmeticError):
    """數值解析度不足異常"""
    category = ErrorCategory.NUMERIC_RESOLUTION


class ExperimentFailure(TelecouplerError):
    """實驗失敗異常 (非有限估計值等)"""
    category = ErrorCategory.EXPERIMENT_FAILURE


class ReportIOError(TelecouplerError):
    """報表讀寫異常"""
    category = ErrorCategory.IO_ERROR


@dataclass
class ErrorInfo:
    """錯誤資訊封裝"""
    category: ErrorCategory
    message: str
    details: Dict[str, Any] = field(default_factory=dict)
    exit_code: int = 2
    suggested_fixes: List[str] = field(default_factory=list)


# 命令列退出碼: 0 全部通過, 1 檢驗失敗, 2 參數/配置, 3 資源/數值, 4 讀寫
EXIT_CODES = {
    ErrorCategory.INVALID_PARAMETER: 2,
    ErrorCategory.CONFIG_ERROR: 2,
    ErrorCategory.RESOURCE_LIMIT: 3,
    ErrorCategory.NUMERIC_RESOLUTION: 3,
    ErrorCategory.EXPERIMENT_FAILURE: 1,
    ErrorCategory.IO_ERROR: 4,
    ErrorCategory.UNKNOWN_ERROR: 2,
}

FIX_SUGGESTIONS = {
    ErrorCategory.INVALID_PARAMETER: [
        "檢查 v0 ≠ 0 且 λ、L、T 皆為正數",
        "確認複本數至少為 100",
        "確認 T★ 清單嚴格遞增",
    ],
    ErrorCategory.RESOURCE_LIMIT: [
        "降低 λT 或提高 simulation.max_jumps",
        "檢查擲幣耦合的 n 是否過大",
    ],
    ErrorCategory.NUMERIC_RESOLUTION: [
        "提高 kmt.grid_size 以改善拉普拉斯和密度表解析度",
        "放寬 kmt.mass_defect_tol",
    ],
    ErrorCategory.EXPERIMENT_FAILURE: [
        "檢查報表中標記為失敗的列",
        "增加複本數以縮小信賴區間",
    ],
    ErrorCategory.IO_ERROR: [
        "確認輸出目錄存在且可寫入",
    ],
    ErrorCategory.CONFIG_ERROR: [
        "檢查 config/settings.yaml 格式",
        "檢查 TELECOUPLER_* 環境變數",
    ],
}


def describe_error(exc: BaseException) -> ErrorInfo:
    """
    將例外轉換為錯誤資訊

    Args:
        exc: 任意例外

    Returns:
        ErrorInfo: 含分類、退出碼與修正建議
    """
    if isinstance(exc, TelecouplerError):
        category = exc.category
        details = dict(exc.details)
    elif type(exc).__name__ == 'ConfigError':
        category = ErrorCategory.CONFIG_ERROR
        details = {}
    elif isinstance(exc, OSError):
        category = ErrorCategory.IO_ERROR
        details = {'errno': getattr(exc, 'errno', None)}
    elif isinstance(exc, ValueError):
        category = ErrorCategory.INVALID_PARAMETER
        details = {}
    else:
        category = ErrorCategory.UNKNOWN_ERROR
        details = {'type': type(exc).__name__}

    return ErrorInfo(
        category=category,
        message=str(exc),
        details=details,
        exit_code=EXIT_CODES[category],
        suggested_fixes=list(FIX_SUGGESTIONS.get(category, [])),
    )


def require_positive(name: str, value: float) -> float:
    """驗證為有限正實數"""
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"{name} 必須是實數: {value!r}", {name: value})
    if not math.isfinite(number) or number <= 0:
        raise InvalidParameterError(f"{name} 必須為有限正數: {value!r}", {name: value})
    return number


def require_non_negative(name: str, value: float) -> float:
    """驗證為有限非負實數"""
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"{name} 必須是實數: {value!r}", {name: value})
    if not math.isfinite(number) or number < 0:
        raise InvalidParameterError(f"{name} 必須為有限非負數: {value!r}", {name: value})
    return number


def require_positive_int(name: str, value: Any, minimum: int = 1) -> int:
    """驗證為不小於 minimum 的整數 (不接受布林值與非整數浮點數)"""
    if isinstance(value, (bool, np.bool_)):
        raise InvalidParameterError(f"{name} 必須是整數: {value!r}", {name: value})
    if isinstance(value, (int, np.integer)):
        number = int(value)
    elif isinstance(value, (float, np.floating)) and float(value).is_integer():
        number = int(value)
    else:
        raise InvalidParameterError(f"{name} 必須是整數: {value!r}", {name: value})
    if number < minimum:
        raise InvalidParameterError(f"{name} 必須 ≥ {minimum}: {value!r}", {name: value})
    return number


def require_finite_array(name: str, values: Any) -> np.ndarray:
    """驗證為全部有限的一維浮點陣列"""
    array = np.asarray(values, dtype=float)
    if array.ndim != 1:
        raise InvalidParameterError(f"{name} 必須是一維陣列 (shape={array.shape})")
    if not np.all(np.isfinite(array)):
        raise InvalidParameterError(f"{name} 含有非有限值")
    return array


def require_probability(name: str, value: float) -> float:
    """驗證為 [0, 1] 內的機率值"""
    number = require_non_negative(name, value)
    if number > 1:
        raise InvalidParameterError(f"{name} 必須在 [0, 1] 範圍內: {value!r}", {name: value})
    return number
