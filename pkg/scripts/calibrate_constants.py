#!/usr/bin/env python3
"""
絕對動差常數校準腳本

以暴力蒙地卡羅估計電報過程絕對動差界限所需的常數 C(r)，
並寫回配置檔的 bounds.abs_moment_constants (凍結後供驗證與界限使用)。

Usage:
    python scripts/calibrate_constants.py
    python scripts/calibrate_constants.py --orders 1,2,4 --paths 200000
    python scripts/calibrate_constants.py --dry-run --json

Author: Leon Lu
Created: 2025-01-24
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List

import yaml

# 添加項目根目錄到Python路徑
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import ConfigManager
from src.modules.errors import describe_error
from src.modules.randkit import RngState
from src.modules.telegraph import ScalingParams, calibrate_abs_moment_constant

# 設置日誌
logging.basicConfig(
    level=logging.WARNING,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


class ConstantCalibrator:
    """絕對動差常數校準器"""

    def __init__(self, settings: ConfigManager, verbose: bool = False):
        """
        初始化校準器

        Args:
            settings: 配置管理器
            verbose: 是否顯示詳細資訊
        """
        self.settings = settings
        self.verbose = verbose
        self.results: Dict[str, Any] = {}

        if verbose:
            logging.getLogger().setLevel(logging.INFO)

    def calibrate(self, orders: List[float], n_paths: int, seed: int,
                  safety: float) -> Dict[float, float]:
        """依序校準每個階數 (各自使用獨立的亂數流)"""
        params = ScalingParams(v0=1.0, lam=1.0, L=1.0, T=1.0)
        constants: Dict[float, float] = {}
        for stream, r in enumerate(orders):
            constants[r] = calibrate_abs_moment_constant(
                r, RngState(seed, stream), params=params, n_paths=n_paths, safety=safety
            )
            print(f"✅ C({r:g}) = {constants[r]:.6g}")
        self.results = {
            'seed': seed,
            'n_paths': n_paths,
            'safety': safety,
            'constants': {f"{r:g}": c for r, c in constants.items()},
        }
        return constants

    def write_back(self, constants: Dict[float, float]) -> Path:
        """把校準結果寫回 YAML 配置檔"""
        path = Path(self.settings.config_path)
        data: Dict[str, Any] = {}
        if path.exists():
            with open(path, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        table = data.setdefault('bounds', {}).setdefault('abs_moment_constants', {})
        for r, c in constants.items():
            table[f"{r:g}"] = float(c)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(data, f, allow_unicode=True, sort_keys=False)
        logger.info(f"已寫入校準常數: {path}")
        return path


def main():
    """主程式"""
    parser = argparse.ArgumentParser(
        description="電報過程絕對動差常數校準工具"
    )
    parser.add_argument('--config', type=str, default=None, help='YAML 配置檔案路徑')
    parser.add_argument('--orders', type=str, default='1,2,4', help='動差階數 (逗號分隔)')
    parser.add_argument('--paths', type=int, default=100_000, help='每個時間點的路徑數')
    parser.add_argument('--seed', type=int, default=None, help='亂數種子')
    parser.add_argument('--safety', type=float, default=1.1, help='安全係數')
    parser.add_argument('--dry-run', action='store_true', help='只顯示結果，不寫回配置檔')
    parser.add_argument('--json', action='store_true', help='以JSON格式輸出結果')
    parser.add_argument('--verbose', '-v', action='store_true', help='顯示詳細資訊')

    args = parser.parse_args()

    try:
        settings = ConfigManager(args.config)
        calibrator = ConstantCalibrator(settings, verbose=args.verbose)
        orders = [float(item) for item in args.orders.split(',') if item.strip()]
        seed = args.seed if args.seed is not None else int(settings.get('monte_carlo.seed', 20250124))
        constants = calibrator.calibrate(orders, args.paths, seed, args.safety)

        if args.json:
            print(json.dumps(calibrator.results, indent=2, ensure_ascii=False))

        if not args.dry_run:
            path = calibrator.write_back(constants)
            print(f"\n📄 常數已寫入: {path}")
        sys.exit(0)

    except KeyboardInterrupt:
        print("\n用戶中斷操作")
        sys.exit(1)
    except Exception as e:
        info = describe_error(e)
        print(f"\n💥 校準失敗: {info.message}")
        for fix in info.suggested_fixes:
            print(f"   - {fix}")
        sys.exit(info.exit_code)


if __name__ == "__main__":
    main()
