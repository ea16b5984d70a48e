"""
配置管理模块

负责加载和管理扫描运行的配置
"""
import copy
import os
from typing import Any, Dict, Optional

import yaml

# 内置默认值；键与命令行参数一一对应
DEFAULTS: Dict[str, Any] = {
    'g': 0.7,
    'eta': '1100:1500:100',
    'j_grid': None,
    'ncut': 80,
    'delta_j': 1e-5,
    'seed': 1234,
    'workers': 1,
    'out': 'output',
    'checkpoint': None,
    'keep_going': False,
    'tol': 1e-10,
    'max_iter': 2000,
    'sector': 1,
    'reorth': True,
    'method': 'lanczos',
    'n_grid': 41,
    'nu': 1.5,
    'nu_scan': '1.0:2.0:0.05',
}


class Config:
    """配置管理类"""

    def __init__(self, config_path: Optional[str] = None):
        """
        初始化配置

        Args:
            config_path: 配置文件路径，默认为config/config.yaml
        """
        self.config_path = config_path or self._get_default_config_path()
        self.config = self._load_config()

    def _get_default_config_path(self) -> str:
        """获取默认配置文件路径"""
        possible_paths = [
            "config/config.yaml",
            "../config/config.yaml",
            os.path.join(os.path.dirname(__file__), "../config/config.yaml"),
        ]
        for path in possible_paths:
            if os.path.exists(path):
                return path
        return "config/config.yaml"

    def _load_config(self) -> Dict[str, Any]:
        """
        加载配置文件，文件中的键覆盖内置默认值

        Returns:
            配置字典
        """
        config = self._get_default_config()
        if not os.path.exists(self.config_path):
            print(f"警告: 配置文件不存在: {self.config_path}，使用内置默认值")
            return config

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                loaded = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            print(f"错误: 加载配置文件失败 - {e}")
            return config

        if loaded is None:
            return config
        if not isinstance(loaded, dict):
            print(f"警告: 配置文件顶层不是映射，已忽略: {self.config_path}")
            return config
        config.update(loaded)
        return config

    def _get_default_config(self) -> Dict[str, Any]:
        """获取默认配置"""
        return copy.deepcopy(DEFAULTS)

    def as_dict(self) -> Dict[str, Any]:
        """配置的深拷贝"""
        return copy.deepcopy(self.config)

    def apply_overrides(self, overrides: Dict[str, Any]) -> None:
        """用命令行参数覆盖配置，值为 None 的键视为未指定"""
        self.config.update({key: value for key, value in overrides.items() if value is not None})
