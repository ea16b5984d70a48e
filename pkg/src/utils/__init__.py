"""
工具函数模块
"""

from .stats import StatsCalculator
from .grid_utils import GridParser

__all__ = ["StatsCalculator", "GridParser"]
