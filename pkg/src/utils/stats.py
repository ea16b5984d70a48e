"""
统计计算工具

提供双对数拟合、均方根、局部极大值等统计分析功能
"""
from typing import List, Dict, Any, Sequence

import numpy as np
from scipy import stats


class StatsCalculator:
    """统计计算器"""

    @staticmethod
    def loglog_fit(x: Sequence[float], y: Sequence[float]) -> Dict[str, Any]:
        """
        对 ln(y) 关于 ln(x) 做普通最小二乘线性拟合

        Args:
            x: 自变量（全部为正）
            y: 因变量（全部为正）

        Returns:
            包含 slope, slope_stderr, intercept, intercept_stderr, r_value 的字典

        Raises:
            ValueError: 数据点少于3个或存在非正值
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"x与y长度不一致: {x.size} != {y.size}")
        if x.size < 3:
            raise ValueError(f"至少需要3个数据点，实际为 {x.size}")
        if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x * y)):
            raise ValueError("双对数拟合要求所有数据为有限正数")

        result = stats.linregress(np.log(x), np.log(y))
        return {
            'slope': float(result.slope),
            'slope_stderr': float(result.stderr),
            'intercept': float(result.intercept),
            'intercept_stderr': float(result.intercept_stderr),
            'r_value': float(result.rvalue),
            'count': int(x.size),
        }

    @staticmethod
    def rms(values: Sequence[float]) -> float:
        """均方根"""
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return 0.0
        return float(np.sqrt(np.mean(values ** 2)))

    @staticmethod
    def pointwise_spread(samples: np.ndarray) -> np.ndarray:
        """
        计算逐点标准差

        Args:
            samples: 形状为 (曲线数, 采样点数) 的数组

        Returns:
            每个采样点处跨曲线的标准差
        """
        return np.std(np.asarray(samples, dtype=float), axis=0)

    @staticmethod
    def local_maxima(values: Sequence[float]) -> List[int]:
        """
        查找序列中的局部极大值位置（含端点）

        平台上只记录第一个位置。

        Args:
            values: 数值序列

        Returns:
            局部极大值的下标列表，按下标升序
        """
        values = np.asarray(values, dtype=float)
        n = values.size
        maxima = []
        i = 0
        while i < n:
            # 跳过平台
            k = i
            while k + 1 < n and values[k + 1] == values[i]:
                k += 1
            left_ok = i == 0 or values[i - 1] < values[i]
            right_ok = k == n - 1 or values[k + 1] < values[i]
            if left_ok and right_ok and n > 1:
                maxima.append(i)
            i = k + 1
        return maxima
