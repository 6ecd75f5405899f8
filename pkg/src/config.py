"""
配置管理器

負責載入和管理模擬與驗證配置，支援環境變數覆蓋和配置驗證。

Author: Leon Lu
Created: 2025-01-24
"""

import os
import yaml
import logging
from pathlib import Path
from typing import Dict, Any, Optional, Union
from dotenv import load_dotenv

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """配置相關異常"""
    pass


class ConfigManager:
    """
    配置管理器

    負責載入YAML配置檔案、環境變數，並提供配置存取介面。
    支援配置驗證和預設值處理。
    """

    def __init__(self, config_path: Optional[str] = None, env_file: Optional[str] = None):
        """
        初始化配置管理器

        Args:
            config_path: YAML配置檔案路徑
            env_file: .env環境變數檔案路徑
        """
        self.config_path = Path(config_path or "config/settings.yaml")
        self.env_file = env_file or ".env"
        self.config: Dict[str, Any] = {}

        self._load_environment()
        self._load_config_file()
        self._override_with_env()
        self._validate_config()

        logger.info(f"配置管理器已初始化: {self.config_path}")

    def _load_environment(self):
        """載入.env環境變數檔案"""
        try:
            if os.path.exists(self.env_file):
                load_dotenv(self.env_file)
                logger.info(f"已載入環境變數檔案: {self.env_file}")
            else:
                logger.debug("未找到.env檔案，使用系統環境變數")
        except Exception as e:
            logger.warning(f"載入環境變數檔案失敗: {e}")

    def _load_config_file(self):
        """載入YAML配置檔案"""
        try:
            if self.config_path.exists():
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    self.config = yaml.safe_load(f) or {}
                logger.info(f"已載入配置檔案: {self.config_path}")
            else:
                logger.warning(f"配置檔案不存在，使用預設配置: {self.config_path}")
                self.config = self._get_default_config()
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML配置檔案格式錯誤: {e}")
        except Exception as e:
            raise ConfigError(f"載入配置檔案失敗: {e}")

    def _get_default_config(self) -> Dict[str, Any]:
        """取得預設配置"""
        return {
            'system': {
                'name': 'telecoupler',
                'version': '1.0.0',
            },
            'simulation': {
                'v0': 1.0,
                'lam': 1.0,
                'L': 1.0,
                'T': 1.0,
                'max_jumps': 100_000_000,
                'randomize_velocity': False,
            },
            'monte_carlo': {
                'seed': 20250124,
                'n_jobs': 1,
                'batch_size': 256,
                'ci_multiplier': 4.0,
            },
            'transport': {
                'grid_points': 1024,
                'quadrature_points': 65536,
            },
            'kmt': {
                'mode': 'dyadic',
                'grid_size': 16384,
                'mass_defect_tol': 1e-6,
                'conditional_points': 512,
            },
            'coinflip': {
                'max_rejections': 1_000_000,
            },
            'bounds': {
                'C': 1.0,
                'k1': 1.0,
                'k2': 1.0,
                'k3': 1.0,
                'C_prime': 1.0,
                'abs_moment_constants': {'1': 1.0, '2': 1.0, '4': 6.0},
            },
            'sweep': {
                'zeta': 1.0,
                'tstars': [16, 64, 256, 1024],
                'slope_window_rel_ci': 0.2,
            },
            'logging': {
                'level': 'INFO',
                'file': None,
                'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                'date_format': '%Y-%m-%d %H:%M:%S',
            },
            'output': {
                'directory': './results',
                'format': 'csv',
                'float_format': '%.10g',
            },
        }

    def _override_with_env(self):
        """使用環境變數覆蓋配置"""
        env_mappings = {
            # 蒙地卡羅設定
            'TELECOUPLER_SEED': ['monte_carlo', 'seed'],
            'TELECOUPLER_REPLICATES': ['monte_carlo', 'replicates'],
            'TELECOUPLER_N_JOBS': ['monte_carlo', 'n_jobs'],
            'TELECOUPLER_CI_MULTIPLIER': ['monte_carlo', 'ci_multiplier'],

            # KMT設定
            'TELECOUPLER_KMT_GRID': ['kmt', 'grid_size'],

            # 輸出設定
            'TELECOUPLER_OUTPUT_DIR': ['output', 'directory'],

            # 日誌設定
            'LOG_LEVEL': ['logging', 'level'],
            'LOG_FILE': ['logging', 'file']
        }

        for env_key, config_keys in env_mappings.items():
            env_value = os.getenv(env_key)
            if env_value is not None:
                self._set_nested_config(config_keys, env_value)

    def _set_nested_config(self, keys: list, value: str):
        """設置嵌套配置值"""
        converted_value = self._convert_env_value(value)

        current = self.config
        for key in keys[:-1]:
            if key not in current:
                current[key] = {}
            current = current[key]

        current[keys[-1]] = converted_value

    def _convert_env_value(self, value: str) -> Union[str, int, float, bool, None]:
        """轉換環境變數值的資料類型"""
        # 布林值 (不含 0/1，避免與整數設定衝突)
        if value.lower() in ('true', 'yes', 'on'):
            return True
        elif value.lower() in ('false', 'no', 'off'):
            return False

        if value.lower() in ('null', 'none', ''):
            return None

        try:
            if any(c in value for c in '.eE') and not value.lower().startswith('0x'):
                return float(value)
            else:
                return int(value)
        except ValueError:
            pass

        return value

    def _validate_config(self):
        """驗證配置完整性"""
        defaults = self._get_default_config()

        # 缺少的區段以預設值補齊
        for section, section_defaults in defaults.items():
            if section not in self.config or self.config[section] is None:
                logger.warning(f"缺少配置區段: {section}，使用預設值")
                self.config[section] = dict(section_defaults)
            elif isinstance(section_defaults, dict):
                for key, value in section_defaults.items():
                    self.config[section].setdefault(key, value)

        validations = [
            (['monte_carlo', 'seed'], int, "亂數種子必須是整數"),
            (['monte_carlo', 'replicates'], int, "複本數必須是整數"),
            (['monte_carlo', 'n_jobs'], int, "平行工作數必須是整數"),
            (['kmt', 'grid_size'], int, "KMT網格點數必須是整數"),
            (['logging', 'level'], str, "日誌級別必須是字串")
        ]

        for keys, expected_type, error_msg in validations:
            value = self.get_nested(keys)
            if value is not None and not isinstance(value, expected_type):
                raise ConfigError(f"配置類型錯誤: {error_msg} ({'.'.join(keys)}={value!r})")

        seed = self.get('monte_carlo.seed')
        if seed is not None and seed < 0:
            raise ConfigError(f"亂數種子必須為非負整數: {seed}")

        tstars = self.get('sweep.tstars', [])
        if any(b <= a for a, b in zip(tstars, tstars[1:])):
            raise ConfigError(f"掃描 T★ 必須嚴格遞增: {tstars}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        取得配置值

        Args:
            key: 配置鍵 (支援點號分隔的嵌套鍵)
            default: 預設值

        Returns:
            配置值
        """
        keys = key.split('.')
        return self.get_nested(keys, default)

    def get_nested(self, keys: list, default: Any = None) -> Any:
        """
        取得嵌套配置值

        Args:
            keys: 配置鍵列表
            default: 預設值

        Returns:
            配置值
        """
        current = self.config

        for key in keys:
            if isinstance(current, dict) and key in current:
                current = current[key]
            else:
                return default

        return current

    def set(self, key: str, value: Any):
        """
        設置配置值

        Args:
            key: 配置鍵 (支援點號分隔的嵌套鍵)
            value: 配置值
        """
        keys = key.split('.')
        if isinstance(value, str):
            self._set_nested_config(keys, value)
            return

        current = self.config
        for part in keys[:-1]:
            current = current.setdefault(part, {})
        current[keys[-1]] = value

    def get_simulation_config(self) -> Dict[str, Any]:
        """取得模擬參數配置"""
        return self.get('simulation', {})

    def get_monte_carlo_config(self) -> Dict[str, Any]:
        """取得蒙地卡羅配置"""
        return self.get('monte_carlo', {})

    def get_transport_config(self) -> Dict[str, Any]:
        """取得傳輸成本配置"""
        return self.get('transport', {})

    def get_kmt_config(self) -> Dict[str, Any]:
        """取得KMT耦合配置"""
        return self.get('kmt', {})

    def get_bounds_constants(self) -> Dict[str, float]:
        """
        取得界限常數

        Returns:
            C, k1, k2, k3, C_prime 的數值字典 (不含絕對動差常數表)
        """
        bounds = self.get('bounds', {})
        return {
            key: float(bounds.get(key, 1.0))
            for key in ('C', 'k1', 'k2', 'k3', 'C_prime')
        }

    def get_abs_moment_constants(self) -> Dict[float, float]:
        """取得已校準的絕對動差常數 C(r)"""
        table = self.get('bounds.abs_moment_constants', {}) or {}
        return {float(r): float(c) for r, c in table.items()}

    def get_logging_config(self) -> Dict[str, Any]:
        """取得日誌配置"""
        return self.get('logging', {})

    def get_output_config(self) -> Dict[str, Any]:
        """取得輸出配置"""
        return self.get('output', {})

    def export_config(self, output_path: Optional[str] = None) -> Dict[str, Any]:
        """
        匯出配置

        Args:
            output_path: 輸出檔案路徑 (可選)

        Returns:
            配置字典
        """
        if output_path:
            try:
                with open(output_path, 'w', encoding='utf-8') as f:
                    yaml.safe_dump(self.config, f, default_flow_style=False,
                                   allow_unicode=True, indent=2, sort_keys=False)
                logger.info(f"配置已匯出到: {output_path}")
            except OSError as e:
                logger.error(f"匯出配置失敗: {e}")

        return dict(self.config)

    def reload(self):
        """重新載入配置"""
        self.config = {}
        self._load_environment()
        self._load_config_file()
        self._override_with_env()
        self._validate_config()
        logger.info("配置已重新載入")

    def __str__(self) -> str:
        """字串表示"""
        return f"ConfigManager(config_path={self.config_path})"

    def __repr__(self) -> str:
        """詳細字串表示"""
        return f"ConfigManager(config_path={self.config_path}, sections={list(self.config.keys())})"
