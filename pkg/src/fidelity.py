"""
保真度与保真度磁化率模块

    F(J, δJ) = |⟨ψ0(J)|ψ0(J+δJ)⟩|
    χ_F = −2 ln F / δJ²                        (有限差分)
    χ_F = Σ_{n≠0} |⟨ψn|H1|ψ0⟩|² / (En − E0)²   (微扰求和，小规模对照)
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, sparse

from src.eigensolve import (
    DENSE_DIM_LIMIT,
    EigenResult,
    LanczosConfig,
    ground_state,
    lowest_k_lanczos,
)
from src.model import (
    ModelParams,
    SparseHamiltonian,
    build_hamiltonian,
    build_terms,
    hamiltonian_from_terms,
    parity_operator,
)

# F 高于 1 − 该值时改用 1−F 的精确补数计算 ln F
COMPLEMENT_THRESHOLD = 1e-4
# 能隙小于该值的激发态从微扰求和中剔除
PERTURBATIVE_GAP = 1e-10

STENCILS = ('forward', 'backward', 'symmetric')


class FidelityError(RuntimeError):
    """两基态重叠为零（扇区不匹配或能级交叉）"""


@dataclass
class FsPoint:
    """单个 J 处的保真度磁化率"""

    j: float
    chi_f: float
    delta_j: float
    fidelity: float
    infidelity: float = 0.0
    stencil: str = 'forward'
    # J 处的基态，供调用方继续计算可观测量
    ground_state: Optional[EigenResult] = field(default=None, repr=False, compare=False)


def _check_pair(psi_a: np.ndarray, psi_b: np.ndarray):
    psi_a = np.asarray(psi_a, dtype=float)
    psi_b = np.asarray(psi_b, dtype=float)
    if psi_a.shape != psi_b.shape or psi_a.ndim != 1:
        raise ValueError(f"态矢维数不匹配: {psi_a.shape} vs {psi_b.shape}")
    return psi_a, psi_b


def fidelity(psi_a: np.ndarray, psi_b: np.ndarray) -> float:
    """
    基态保真度 |⟨ψa|ψb⟩|，与本征矢的符号约定无关

    Raises:
        ValueError: 维数不匹配
    """
    psi_a, psi_b = _check_pair(psi_a, psi_b)
    return float(abs(psi_a @ psi_b))


def infidelity(psi_a: np.ndarray, psi_b: np.ndarray) -> float:
    """
    1 − F 的精确计算

    对单位矢量 1 − |⟨a|b⟩| = ‖a − s·b‖²/2，s = sign⟨a|b⟩，避免 F≈1 时的相消误差。
    """
    psi_a, psi_b = _check_pair(psi_a, psi_b)
    a = psi_a / np.linalg.norm(psi_a)
    b = psi_b / np.linalg.norm(psi_b)
    sign = 1.0 if a @ b >= 0 else -1.0
    diff = a - sign * b
    return float(diff @ diff) / 2.0


def _chi_from_states(psi_a: np.ndarray, psi_b: np.ndarray, delta_j: float):
    f = fidelity(psi_a, psi_b)
    if f < 1e-12:
        raise FidelityError("两基态重叠为零，可能处于不同宇称扇区或发生能级交叉")
    d = infidelity(psi_a, psi_b)
    if f > 1.0 - COMPLEMENT_THRESHOLD:
        log_f = np.log1p(-d)
    else:
        log_f = np.log(f)
    return -2.0 * float(log_f) / delta_j ** 2, f, d


def susceptibility_along(hamiltonian_at: Callable[[float], SparseHamiltonian], j: float,
                         delta_j: float, cfg: LanczosConfig, stencil: str = 'forward') -> FsPoint:
    """
    对任意以 J 为参数的哈密顿量计算有限差分 χ_F

    两次求解使用同一宇称扇区和同一随机种子，重叠只反映物理态的变化。

    Args:
        hamiltonian_at: J -> SparseHamiltonian
        j: 控制参数
        delta_j: 差分步长
        cfg: 求解设置
        stencil: 'forward' (J, J+δJ)、'backward' (J, J−δJ) 或 'symmetric'（两者平均）

    Returns:
        FsPoint

    Raises:
        ValueError: 步长或差分格式非法
        FidelityError: 重叠为零
        ConvergenceError: 任一求解未收敛
    """
    if not delta_j > 0:
        raise ValueError(f"delta_j 必须为正: {delta_j}")
    if stencil not in STENCILS:
        raise ValueError(f"未知的差分格式: {stencil} (可选 {', '.join(STENCILS)})")

    shifts = {'forward': (delta_j,), 'backward': (-delta_j,), 'symmetric': (delta_j, -delta_j)}[stencil]
    center = ground_state(hamiltonian_at(j), cfg)
    samples = []
    for shift in shifts:
        shifted = ground_state(hamiltonian_at(j + shift), cfg)
        samples.append(_chi_from_states(center.vector, shifted.vector, delta_j))

    chi = float(np.mean([s[0] for s in samples]))
    _, f, d = samples[0]
    return FsPoint(
        j=j,
        chi_f=chi,
        delta_j=delta_j,
        fidelity=f,
        infidelity=d,
        stencil=stencil,
        ground_state=center,
    )


def fidelity_susceptibility(params: ModelParams, delta_j: float, cfg: LanczosConfig,
                            stencil: str = 'forward') -> FsPoint:
    """
    Rabi-dimer 在 params.j 处的保真度磁化率 χ_F = −2 ln F / δJ²

    Args:
        params: 模型参数
        delta_j: 差分步长，应满足 χ_F·δJ² ≪ 1
        cfg: 求解设置
        stencil: 差分格式，默认前向差分

    Returns:
        FsPoint，ground_state 字段为 J 处的基态
    """
    params.validate()
    if stencil in ('backward', 'symmetric') and params.j - delta_j < 0:
        raise ValueError(f"后向差分越过 J=0: J={params.j}, δJ={delta_j}")
    h0, h1 = build_terms(params)
    parity = parity_operator(params)

    def hamiltonian_at(j: float) -> SparseHamiltonian:
        return hamiltonian_from_terms(h0, h1, params.with_j(j), parity)

    return susceptibility_along(hamiltonian_at, params.j, delta_j, cfg, stencil)


def perturbative_susceptibility(h: SparseHamiltonian, h1: sparse.spmatrix,
                                k_states: Optional[int], cfg: Optional[LanczosConfig] = None) -> float:
    """
    微扰求和形式的 χ_F

    k_states 为 None 或不小于扇区维数−1 时对全部激发态求和（稠密对角化），
    否则对最低 k_states 个激发态求部分和；部分和随 k_states 单调不减。

    Args:
        h: 哈密顿量
        h1: ∂H/∂J
        k_states: 参与求和的激发态个数
        cfg: 求解设置（决定宇称扇区；部分和时用于 Lanczos）

    Returns:
        χ_F
    """
    sector = cfg.sector if cfg is not None else None
    if sector is not None:
        if h.parity is None:
            raise ValueError("该哈密顿量不带宇称信息，无法按扇区求解")
        index = np.flatnonzero(h.parity == sector)
    else:
        index = np.arange(h.dim)
    if k_states is not None and k_states < 0:
        raise ValueError(f"k_states 不能为负: {k_states}")

    if k_states is None or k_states >= index.size - 1:
        if h.dim > DENSE_DIM_LIMIT:
            raise ValueError(f"稠密对角化维数超限: {h.dim} > {DENSE_DIM_LIMIT}")
        block = h.matrix.toarray()[np.ix_(index, index)]
        energies, block_vectors = linalg.eigh(block)
        vectors = np.zeros((h.dim, index.size))
        vectors[index] = block_vectors
    else:
        if cfg is None:
            raise ValueError("部分求和需要提供 LanczosConfig")
        pairs = lowest_k_lanczos(h, k_states + 1, cfg)
        energies = np.array([p.value for p in pairs])
        vectors = np.column_stack([p.vector for p in pairs])

    if k_states is not None:
        energies = energies[:k_states + 1]
        vectors = vectors[:, :k_states + 1]

    psi0 = vectors[:, 0]
    overlaps = vectors[:, 1:].T @ (h1 @ psi0)
    gaps = energies[1:] - energies[0]
    keep = np.abs(gaps) >= PERTURBATIVE_GAP
    if not np.all(keep):
        print(f"警告: {int((~keep).sum())} 个激发态与基态简并 (能隙 < {PERTURBATIVE_GAP})，已从求和中剔除")
    return float(np.sum(overlaps[keep] ** 2 / gaps[keep] ** 2))


def fs_perturbative(params: ModelParams, k_states: Optional[int],
                    cfg: Optional[LanczosConfig] = None) -> float:
    """
    Rabi-dimer 的微扰求和 χ_F，H1 = (a_L + a†_L)(a_R + a†_R)（以 ω 为单位，即 ∂H/∂J）

    Args:
        params: 模型参数
        k_states: 参与求和的最低激发态个数，None 表示全部
        cfg: 求解设置

    Returns:
        χ_F
    """
    _, h1 = build_terms(params)
    return perturbative_susceptibility(build_hamiltonian(params), h1, k_states, cfg)
