"""测试公共夹具"""
import numpy as np
import pytest
from scipy import sparse

from src.eigensolve import LanczosConfig
from src.model import ModelParams, SparseHamiltonian


@pytest.fixture
def small_params():
    """n_cut=4 的小规模实例，维数 64"""
    return ModelParams(g=0.7, eta=50.0, j=0.2, n_cut=4)


@pytest.fixture
def tight_cfg():
    return LanczosConfig(max_iter=400, tol=1e-12, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def two_level(j: float) -> SparseHamiltonian:
    """H(J) = σᶻ + J·σˣ"""
    return SparseHamiltonian(sparse.csr_matrix(np.array([[1.0, j], [j, -1.0]])))


@pytest.fixture
def two_level_at():
    return two_level


# 随机小体系的种子；J 区间覆盖两相 (J_c = (1−g²)/2 ∈ [0, 0.495])
RANDOM_SEEDS = list(range(8))


def random_params(seed: int) -> ModelParams:
    """n_cut ≤ 4 的随机实例"""
    draw = np.random.default_rng(seed)
    return ModelParams(
        g=float(draw.uniform(0.1, 1.0)),
        eta=float(draw.uniform(1.0, 50.0)),
        j=float(draw.uniform(0.01, 0.5)),
        n_cut=int(draw.integers(2, 5)),
    )
