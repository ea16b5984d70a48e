"""
Rabi-dimer 临界性数值工具

构建截断Fock空间下的Rabi-dimer哈密顿量，用Lanczos方法求基态，
计算基态可观测量与保真度磁化率，并通过有限频率标度提取临界点与临界指数。
"""

__version__ = "1.0.0"
__author__ = "Quantum Criticality Team"
