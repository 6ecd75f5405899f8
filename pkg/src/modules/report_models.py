"""
報表結構化模型

使用Pydantic定義估計值、檢驗結果、界限報表與實驗配置，確保輸出格式一致。

Author: Leon Lu
Created: 2025-01-25
"""

import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

_UINT64_MAX = 2 ** 64 - 1

# 95% 信賴區間的常態分位數
Z_95 = 1.96


class ExperimentName(str, Enum):
    """實驗類型枚舉"""
    VERIFY_MOMENTS = "verify-moments"
    VERIFY_COUPLINGS = "verify-couplings"
    CONVERGENCE_SWEEP = "convergence-sweep"
    KMT_GAP = "kmt-gap"
    BOUNDS_TABLE = "bounds-table"


# 各實驗預設複本數
DEFAULT_REPLICATES = {
    ExperimentName.VERIFY_MOMENTS: 1_000_000,
    ExperimentName.VERIFY_COUPLINGS: 100_000,
    ExperimentName.CONVERGENCE_SWEEP: 10_000,
    ExperimentName.KMT_GAP: 1_000,
    ExperimentName.BOUNDS_TABLE: 0,
}


class EstimateWithCI(BaseModel):
    """帶95%信賴區間的估計值"""

    point: float = Field(..., description="點估計")
    half_width_95: float = Field(..., ge=0.0, description="95%信賴區間半寬")
    n_replicates: int = Field(..., ge=1, description="複本數")

    @property
    def lower(self) -> float:
        return self.point - self.half_width_95

    @property
    def upper(self) -> float:
        return self.point + self.half_width_95

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.point) and math.isfinite(self.half_width_95)

    @classmethod
    def from_samples(cls, values: Any, transform: Literal['identity', 'sqrt'] = 'identity') -> "EstimateWithCI":
        """
        由樣本建立估計值

        Args:
            values: 樣本
            transform: identity 為樣本平均；sqrt 為平均的平方根 (delta 方法區間)
        """
        samples = np.asarray(values, dtype=float).reshape(-1)
        if samples.size == 0:
            raise ValueError("樣本不能為空")
        mean = float(samples.mean())
        se = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
        if transform == 'identity':
            return cls(point=mean, half_width_95=Z_95 * se, n_replicates=samples.size)
        if transform == 'sqrt':
            point = math.sqrt(max(mean, 0.0))
            half = Z_95 * se / (2.0 * point) if point > 0 else 0.0
            return cls(point=point, half_width_95=half, n_replicates=samples.size)
        raise ValueError(f"未知的轉換: {transform}")

    def to_flat(self, prefix: str) -> Dict[str, Any]:
        """攤平成 <prefix>, <prefix>_half_width, <prefix>_n 三欄"""
        return {
            prefix: self.point,
            f"{prefix}_half_width": self.half_width_95,
            f"{prefix}_n": self.n_replicates,
        }


class CostSample(BaseModel):
    """單一路徑對的平均二次成本"""

    value: float = Field(..., ge=0.0, description="c₂ 值")
    coupling_tag: str = Field(..., description="耦合類型")
    replicate_id: int = Field(..., ge=0, description="複本編號")

    @field_validator('value')
    @classmethod
    def validate_value(cls, v):
        """成本必須為有限值"""
        if not math.isfinite(v):
            raise ValueError("成本必須為有限值")
        return v


class CheckResult(BaseModel):
    """單項檢驗結果"""

    name: str = Field(..., description="檢驗名稱")
    reference: str = Field(..., description="對照的公式或性質")
    statistic: float = Field(..., description="蒙地卡羅統計量")
    expected: Optional[float] = Field(None, description="理論值或界限")
    threshold: float = Field(..., description="容許差距或界限")
    passed: bool = Field(..., description="是否通過")
    detail: str = Field("", description="補充說明")


class BoundReport(BaseModel):
    """解析界限評估結果"""

    T_star: float = Field(..., gt=0.0)
    L_star: float = Field(..., gt=0.0)
    main_rhs: float = Field(..., ge=0.0, description="主界限右側")
    crude_rhs: float = Field(..., ge=0.0, description="獨立耦合的粗略界限")
    coinflip_rhs: float = Field(..., ge=0.0)
    synchronous_rhs: float = Field(..., ge=0.0)
    kmt_rhs: float = Field(..., ge=0.0)
    constants_used: Dict[str, float] = Field(default_factory=dict, description="使用的常數")
    supplementary: Dict[str, float] = Field(default_factory=dict, description="補充界限")

    def to_csv_record(self) -> Dict[str, Any]:
        """攤平成單列紀錄 (常數與補充界限各自展開)"""
        record: Dict[str, Any] = {
            'T_star': self.T_star,
            'L_star': self.L_star,
            'main_rhs': self.main_rhs,
            'crude_rhs': self.crude_rhs,
            'coinflip_rhs': self.coinflip_rhs,
            'synchronous_rhs': self.synchronous_rhs,
            'kmt_rhs': self.kmt_rhs,
        }
        for key in sorted(self.supplementary):
            record[key] = self.supplementary[key]
        for key in sorted(self.constants_used):
            record[f"const_{key}"] = self.constants_used[key]
        return record


class ExperimentConfig(BaseModel):
    """實驗配置"""

    model_config = ConfigDict(extra='forbid')

    experiment: ExperimentName = Field(..., description="實驗類型")
    v0: float = Field(1.0, description="速度")
    lam: float = Field(1.0, gt=0.0, description="翻轉速率")
    L: float = Field(1.0, gt=0.0, description="空間尺度")
    T: float = Field(1.0, gt=0.0, description="時間區間")
    zeta: float = Field(1.0, gt=0.0, description="T★/L★²")
    tstars: List[float] = Field(default_factory=lambda: [16.0, 64.0, 256.0, 1024.0],
                                description="掃描的 T★")
    ns: List[int] = Field(default_factory=lambda: [2 ** k for k in range(4, 13)],
                          description="KMT 差距診斷的漫步長度")
    replicates: Optional[int] = Field(None, ge=1, description="複本數 (未指定時依實驗類型)")
    seed: int = Field(20250124, ge=0, le=_UINT64_MAX, description="亂數種子")
    output: Optional[str] = Field(None, description="輸出檔案路徑")
    format: Literal['csv', 'json'] = Field('csv', description="輸出格式")
    constants: Dict[str, float] = Field(default_factory=dict, description="界限常數")
    n_jobs: int = Field(1, description="joblib 平行工作數")
    batch_size: int = Field(256, ge=1, description="每個平行工作的複本數")
    ci_multiplier: float = Field(4.0, gt=0.0, description="檢驗門檻的標準誤倍數")
    kmt_mode: Literal['quantile', 'dyadic'] = Field('dyadic', description="KMT 耦合模式")
    grid_points: int = Field(1024, ge=1, description="布朗路徑均勻網格點數")
    lower_grid_points: int = Field(256, ge=1, description="下界估計的時間網格點數")
    slope_window_rel_ci: float = Field(0.2, gt=0.0, description="斜率擬合排除門檻")
    include_timing: bool = Field(False, description="是否在報表中寫入實際耗時")

    @field_validator('v0')
    @classmethod
    def validate_v0(cls, v):
        """速度不能為零"""
        if v == 0 or not math.isfinite(v):
            raise ValueError("v0 必須為非零有限值")
        return v

    @field_validator('tstars')
    @classmethod
    def validate_tstars(cls, v):
        """T★ 必須為正且嚴格遞增"""
        if any(t <= 0 for t in v):
            raise ValueError("T★ 必須為正")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("T★ 必須嚴格遞增")
        return v

    @field_validator('ns')
    @classmethod
    def validate_ns(cls, v):
        if any(n < 1 for n in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("漫步長度必須為正且嚴格遞增")
        return v

    @model_validator(mode='after')
    def validate_experiment(self):
        """統計實驗至少 100 個複本；收斂掃描至少 4 個 T★"""
        if self.experiment != ExperimentName.BOUNDS_TABLE and self.replicates is not None:
            if self.replicates < 100:
                raise ValueError(f"統計實驗至少需要 100 個複本: {self.replicates}")
        if self.experiment == ExperimentName.CONVERGENCE_SWEEP and len(self.tstars) < 4:
            raise ValueError(f"收斂掃描至少需要 4 個 T★: {self.tstars}")
        if self.experiment == ExperimentName.KMT_GAP and len(self.ns) < 2:
            raise ValueError("KMT 差距診斷至少需要 2 個漫步長度")
        return self

    @property
    def effective_replicates(self) -> int:
        if self.replicates is not None:
            return self.replicates
        return DEFAULT_REPLICATES[self.experiment]

    def constant(self, name: str, default: float = 1.0) -> float:
        return float(self.constants.get(name, default))


class SweepRow(BaseModel):
    """收斂掃描的一列 (欄位順序即 CSV 欄位順序)"""

    T_star: float
    L_star: float
    w2_upper_coinflip_chain: EstimateWithCI
    w2_upper_independent: EstimateWithCI
    w2_lower: EstimateWithCI
    main_rhs: float
    crude_rhs: float
    runtime_seconds: float = Field(0.0, ge=0.0)

    def to_csv_record(self) -> Dict[str, Any]:
        """依欄位順序攤平估計值"""
        record: Dict[str, Any] = {}
        for name in type(self).model_fields:
            value = getattr(self, name)
            if isinstance(value, EstimateWithCI):
                record.update(value.to_flat(name))
            else:
                record[name] = value
        return record


class SweepResult(BaseModel):
    """收斂掃描結果"""

    rows: List[SweepRow] = Field(default_factory=list)
    slope: float = Field(..., description="ln(W₂ 上界) 對 ln(T★) 的斜率")
    slope_stderr: float = Field(..., ge=0.0)
    slope_window: List[float] = Field(default_factory=list, description="參與擬合的 T★")
    checks: List[CheckResult] = Field(default_factory=list)
    passed: bool = False


class VerificationReport(BaseModel):
    """驗證報表"""

    experiment: str
    checks: List[CheckResult] = Field(default_factory=list)
    passed: bool = False

    @classmethod
    def from_checks(cls, experiment: str, checks: List[CheckResult]) -> "VerificationReport":
        return cls(experiment=experiment, checks=checks, passed=all(c.passed for c in checks))


class KmtGapRow(BaseModel):
    """KMT 差距診斷的一列"""

    mode: str
    n: int = Field(..., ge=1)
    median_gap: float = Field(..., ge=0.0)
    replicates: int = Field(..., ge=1)


class KmtGapResult(BaseModel):
    """KMT 差距診斷結果"""

    rows: List[KmtGapRow] = Field(default_factory=list)
    exponents: Dict[str, float] = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    passed: bool = False


class BoundsTable(BaseModel):
    """界限表"""

    rows: List[BoundReport] = Field(default_factory=list)
    checks: List[CheckResult] = Field(default_factory=list)
    passed: bool = False
