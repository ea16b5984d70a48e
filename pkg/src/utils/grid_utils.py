"""
参数网格工具

解析命令行与配置文件中的参数网格写法
"""
from typing import List, Tuple, Union, Sequence

import numpy as np

GridSpec = Union[str, float, int, Sequence[float], None]


class GridParser:
    """参数网格解析器"""

    # 浮点网格统一保留的小数位，避免 0.1*3 之类的尾差
    DECIMALS = 12

    @staticmethod
    def parse_values(spec: GridSpec) -> List[float]:
        """
        解析数值列表

        支持的写法:
            0.7              单个值
            0.7,0.8          逗号分隔的列表
            1100:1500:100    起点:终点:步长（包含终点）
            [0.7, 0.8]       YAML列表

        Args:
            spec: 网格描述

        Returns:
            数值列表

        Raises:
            ValueError: 写法无法解析或步长非法
        """
        if spec is None:
            return []
        if isinstance(spec, (int, float)):
            return [float(spec)]
        if not isinstance(spec, str):
            return [float(v) for v in spec]

        text = spec.strip()
        if not text:
            return []
        if ':' in text:
            parts = text.split(':')
            if len(parts) != 3:
                raise ValueError(f"区间写法应为 起点:终点:步长 - {spec}")
            start, stop, step = (float(p) for p in parts)
            if step <= 0:
                raise ValueError(f"步长必须为正 - {spec}")
            if stop < start:
                raise ValueError(f"终点小于起点 - {spec}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, GridParser.DECIMALS) for i in range(count)]
        return [float(p) for p in text.split(',') if p.strip()]

    @staticmethod
    def parse_j_grid(spec: GridSpec) -> Tuple[float, float, int]:
        """
        解析J网格 最小值:最大值:点数

        Args:
            spec: 形如 '0.1:0.5:41' 的字符串或三元序列

        Returns:
            (j_min, j_max, count)

        Raises:
            ValueError: 写法无法解析
        """
        if isinstance(spec, str):
            parts = spec.split(':')
            if len(parts) != 3:
                raise ValueError(f"J网格写法应为 最小值:最大值:点数 - {spec}")
            return float(parts[0]), float(parts[1]), int(parts[2])
        j_min, j_max, count = spec
        return float(j_min), float(j_max), int(count)

    @staticmethod
    def linspace(j_min: float, j_max: float, count: int) -> List[float]:
        """生成包含端点的等距网格"""
        if count == 1:
            return [float(j_min)]
        return [float(v) for v in np.linspace(j_min, j_max, count)]
