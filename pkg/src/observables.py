"""
基态可观测量模块

计算基态能量、各腔光子数以及反对称简正模平方的期望 ⟨x²₋⟩，
其中 x_i = (a_i + a†_i)/√(2η)，x± = (x_L ± x_R)/√2。
"""
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from src.eigensolve import EigenResult, LanczosConfig, ground_state
from src.model import (
    ModelParams,
    basis_dim,
    build_hamiltonian,
    number_operator_diagonal,
    quadrature_operator,
)

# 输入态的归一化容差
NORM_TOL = 1e-8
# 光子数超过 n_cut 的这一比例时认为截断不可信
TRUNCATION_PRESSURE = 0.5


@dataclass
class GsObservables:
    """基态诊断量"""

    e0: float
    n_photon_l: float
    n_photon_r: float
    x2_minus: float
    x2_plus: float
    params: ModelParams
    residual: float = 0.0
    truncation_pressure: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'e0': self.e0,
            'n_l': self.n_photon_l,
            'n_r': self.n_photon_r,
            'x2_minus': self.x2_minus,
            'x2_plus': self.x2_plus,
            'residual': self.residual,
            'truncation_pressure': self.truncation_pressure,
        }


def _check_state(state: np.ndarray, params: ModelParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    dim = basis_dim(params)
    if state.ndim != 1 or state.shape[0] != dim:
        raise ValueError(f"态矢维数不匹配: {state.shape} vs dim={dim}")
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"态矢未归一化: ‖ψ‖ = {norm!r}")
    return state


def photon_population(state: np.ndarray, cavity: str, params: ModelParams) -> float:
    """
    光子数期望 ⟨a†a⟩

    Args:
        state: 归一化态矢
        cavity: 'L' 或 'R'
        params: 模型参数

    Returns:
        Σ n_cavity |ψ|²

    Raises:
        ValueError: 维数不匹配或未归一化
    """
    state = _check_state(state, params)
    return float(number_operator_diagonal(params, cavity) @ (state * state))


def _mode_squared(state: np.ndarray, params: ModelParams, sign: float) -> float:
    state = _check_state(state, params)
    w = quadrature_operator(params, 'L') @ state + sign * (quadrature_operator(params, 'R') @ state)
    return float(w @ w) / (4.0 * params.eta)


def x_minus_squared(state: np.ndarray, params: ModelParams) -> float:
    """
    反对称简正模平方的期望 ⟨x²₋⟩

    x₋ = (a_L + a†_L − a_R − a†_R)/(2√η)，通过稀疏算符作用计算，不构造稠密矩阵。
    """
    return _mode_squared(state, params, -1.0)


def x_plus_squared(state: np.ndarray, params: ModelParams) -> float:
    """对称简正模平方的期望 ⟨x²₊⟩"""
    return _mode_squared(state, params, 1.0)


def observables_from_state(result: EigenResult, params: ModelParams) -> GsObservables:
    """
    对已求得的基态计算全部可观测量

    Args:
        result: 基态本征对
        params: 对应的模型参数

    Returns:
        GsObservables
    """
    state = result.vector
    n_l = photon_population(state, 'L', params)
    n_r = photon_population(state, 'R', params)
    pressure = max(n_l, n_r) > TRUNCATION_PRESSURE * params.n_cut
    if pressure:
        print(f"警告: 基态光子数 {max(n_l, n_r):.2f} 接近截断 n_cut={params.n_cut} ({params.describe()})")
    return GsObservables(
        e0=result.value,
        n_photon_l=n_l,
        n_photon_r=n_r,
        x2_minus=x_minus_squared(state, params),
        x2_plus=x_plus_squared(state, params),
        params=params,
        residual=result.residual,
        truncation_pressure=pressure,
    )


def gs_observables(params: ModelParams, cfg: LanczosConfig) -> GsObservables:
    """
    求基态并计算全部可观测量

    Raises:
        ConvergenceError: 求解器未收敛
    """
    result = ground_state(build_hamiltonian(params), cfg)
    return observables_from_state(result, params)


def truncation_probe(params: ModelParams, cfg: LanczosConfig, extra: int = 4) -> Dict[str, float]:
    """
    截断收敛性检查：比较 n_cut 与 n_cut+extra 下的基态能量

    Args:
        params: 模型参数
        cfg: 求解设置
        extra: 额外保留的 Fock 态数目

    Returns:
        包含 e0, e0_extended, delta 的字典
    """
    if extra < 1:
        raise ValueError(f"extra 至少为1: {extra}")
    e0 = ground_state(build_hamiltonian(params), cfg).value
    extended = params.with_n_cut(params.n_cut + extra)
    e0_extended = ground_state(build_hamiltonian(extended), cfg).value
    return {
        'e0': e0,
        'e0_extended': e0_extended,
        'delta': abs(e0 - e0_extended),
    }
