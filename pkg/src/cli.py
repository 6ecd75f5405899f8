#!/usr/bin/env python3
"""
telecoupler 命令列介面

執行動差驗證、耦合稽核、收斂掃描、KMT差距診斷與界限表，並寫出報表。

Usage:
    telecoupler verify-moments --replicates 100000 --seed 7
    telecoupler convergence-sweep --zeta 1 --tstars 16,64,256,1024 --out results/sweep.csv
    telecoupler bounds-table --tstars 1,10,100 --constants C=2,k1=1.5 --format json

Author: Leon Lu
Created: 2025-01-24
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .config import ConfigError, ConfigManager
from .modules.errors import describe_error
from .modules.harness import ExperimentRunner
from .modules.report_models import ExperimentConfig, ExperimentName

logger = logging.getLogger(__name__)


def setup_logging(settings: Optional[ConfigManager], verbose: bool = False):
    """依 logging 配置區段設定根日誌器 (只在命令列呼叫一次)"""
    section = settings.get_logging_config() if settings else {}
    level = logging.DEBUG if verbose else getattr(logging, str(section.get('level', 'INFO')).upper(),
                                                  logging.INFO)
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if section.get('file'):
        log_file = Path(section['file'])
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(
        level=level,
        format=section.get('format', '%(asctime)s - %(name)s - %(levelname)s - %(message)s'),
        datefmt=section.get('date_format', '%Y-%m-%d %H:%M:%S'),
        handlers=handlers,
        force=True,
    )


def parse_float_list(text: str) -> List[float]:
    """'16,64,256' → [16.0, 64.0, 256.0]"""
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"無法解析數值清單: {text}")


def parse_int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"無法解析整數清單: {text}")


def parse_constants(text: str) -> Dict[str, float]:
    """'k1=1.5,C=2' → {'k1': 1.5, 'C': 2.0}"""
    constants: Dict[str, float] = {}
    for item in filter(None, (part.strip() for part in text.split(','))):
        key, sep, value = item.partition('=')
        if not sep:
            raise argparse.ArgumentTypeError(f"常數格式應為 name=value: {item}")
        try:
            constants[key.strip()] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"常數值不是數字: {item}")
    return constants


def build_parser() -> argparse.ArgumentParser:
    """建立參數解析器"""
    parser = argparse.ArgumentParser(
        prog='telecoupler',
        description="電報過程與布朗運動的耦合模擬及 Wasserstein 距離驗證工具",
    )
    parser.add_argument('experiment', choices=[e.value for e in ExperimentName], help='實驗類型')
    parser.add_argument('--config', type=str, default=None, help='YAML 配置檔案路徑')
    parser.add_argument('--zeta', type=float, default=None, help='固定的 ζ = T★/L★²')
    parser.add_argument('--tstars', type=parse_float_list, default=None, help='T★ 清單 (逗號分隔)')
    parser.add_argument('--ns', type=parse_int_list, default=None, help='KMT 差距診斷的漫步長度')
    parser.add_argument('--replicates', type=int, default=None, help='複本數')
    parser.add_argument('--seed', type=int, default=None, help='亂數種子 (uint64)')
    parser.add_argument('--out', type=str, default=None, help='報表輸出路徑')
    parser.add_argument('--format', choices=['csv', 'json'], default=None, help='報表格式')
    parser.add_argument('--constants', type=parse_constants, default=None,
                        help='界限常數，例如 k1=1,k2=1,k3=1,C=1')
    parser.add_argument('--n-jobs', type=int, default=None, help='joblib 平行工作數')
    parser.add_argument('--kmt-mode', choices=['quantile', 'dyadic'], default=None, help='KMT 耦合模式')
    parser.add_argument('--v0', type=float, default=None)
    parser.add_argument('--lam', type=float, default=None)
    parser.add_argument('--L', type=float, default=None)
    parser.add_argument('--T', type=float, default=None)
    parser.add_argument('--include-timing', action='store_true', help='報表寫入實際耗時')
    parser.add_argument('--verbose', '-v', action='store_true', help='顯示除錯日誌')
    return parser


def build_experiment_config(args: argparse.Namespace, settings: ConfigManager) -> ExperimentConfig:
    """合併配置檔與命令列參數 (命令列優先)"""
    simulation = settings.get_simulation_config()
    monte_carlo = settings.get_monte_carlo_config()
    sweep = settings.get('sweep', {})
    output = settings.get_output_config()

    def pick(value: Any, default: Any) -> Any:
        return default if value is None else value

    constants = settings.get_bounds_constants()
    constants.update(args.constants or {})
    fmt = pick(args.format, output.get('format', 'csv'))
    out = args.out
    if out is None and output.get('directory'):
        out = str(Path(output['directory']) / f"{args.experiment}.{fmt}")

    fields: Dict[str, Any] = {
        'experiment': args.experiment,
        'v0': pick(args.v0, simulation.get('v0', 1.0)),
        'lam': pick(args.lam, simulation.get('lam', 1.0)),
        'L': pick(args.L, simulation.get('L', 1.0)),
        'T': pick(args.T, simulation.get('T', 1.0)),
        'zeta': pick(args.zeta, sweep.get('zeta', 1.0)),
        'tstars': pick(args.tstars, [float(t) for t in sweep.get('tstars', [16, 64, 256, 1024])]),
        'replicates': pick(args.replicates, monte_carlo.get('replicates')),
        'seed': pick(args.seed, monte_carlo.get('seed', 20250124)),
        'output': out,
        'format': fmt,
        'constants': constants,
        'n_jobs': pick(args.n_jobs, monte_carlo.get('n_jobs', 1)),
        'batch_size': monte_carlo.get('batch_size', 256),
        'ci_multiplier': monte_carlo.get('ci_multiplier', 4.0),
        'kmt_mode': pick(args.kmt_mode, settings.get('kmt.mode', 'dyadic')),
        'grid_points': settings.get('transport.grid_points', 1024),
        'slope_window_rel_ci': sweep.get('slope_window_rel_ci', 0.2),
        'include_timing': args.include_timing,
    }
    if args.ns is not None:
        fields['ns'] = args.ns
    return ExperimentConfig(**fields)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    命令列主程式

    Returns:
        退出碼: 0 全部通過, 1 檢驗失敗, 2 參數/配置, 3 資源/數值, 4 讀寫
    """
    args = build_parser().parse_args(argv)

    settings: Optional[ConfigManager] = None
    try:
        settings = ConfigManager(args.config)
    except ConfigError as e:
        setup_logging(None, args.verbose)
        logger.error(f"配置載入失敗: {e}")
        return describe_error(e).exit_code
    setup_logging(settings, args.verbose)

    try:
        config = build_experiment_config(args, settings)
        runner = ExperimentRunner(config, settings)
        report = runner.run()
        target = runner.write_report(report)
    except KeyboardInterrupt:
        logger.warning("用戶中斷操作")
        return 1
    except Exception as e:
        info = describe_error(e)
        logger.error(f"實驗失敗 ({info.category.value}): {info.message}")
        for fix in info.suggested_fixes:
            logger.info(f"建議: {fix}")
        return info.exit_code

    failed = [check.name for check in report.checks if not check.passed]
    if failed:
        logger.warning(f"{len(failed)} 項檢驗未通過: {', '.join(failed[:10])}")
    stats = runner.get_statistics()
    logger.info(f"檢驗通過 {stats['checks_passed']} 項, 未通過 {stats['checks_failed']} 項"
                + (f", 報表: {target}" if target else ""))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
