"""
Rabi-dimer 模型模块

定义模型参数与截断的 Fock⊗自旋 基矢，组装稀疏哈密顿量

    H(J)/ω = H0 + J·H1
    H0 = Σ_i a†_i a_i + (η/2)σᶻ_i − (g√η/2)(a_i + a†_i)σˣ_i      (i = L, R)
    H1 = (a_L + a†_L)(a_R + a†_R)

所有能量以 ω 为单位。
"""
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy import sparse

# 自旋标签: 0 = ↓ (σᶻ = -1), 1 = ↑ (σᶻ = +1)
SPIN_DOWN = 0
SPIN_UP = 1

CAVITIES = ('L', 'R')


@dataclass(frozen=True)
class ModelParams:
    """模型参数 (g, η, J, N_cut)，能量单位为 ω"""

    g: float
    eta: float
    j: float
    n_cut: int

    def validate(self) -> 'ModelParams':
        """
        校验参数合法性

        Returns:
            自身，便于链式调用

        Raises:
            ValueError: 参数越界
        """
        values = (self.g, self.eta, self.j)
        if not all(np.isfinite(v) for v in values):
            raise ValueError(f"参数必须为有限数: {self}")
        if self.g < 0:
            raise ValueError(f"耦合强度 g 不能为负: {self.g}")
        if self.eta <= 0:
            raise ValueError(f"频率比 eta 必须为正: {self.eta}")
        if self.j < 0:
            raise ValueError(f"腔间跃迁 J 不能为负: {self.j}")
        if int(self.n_cut) != self.n_cut or self.n_cut < 1:
            raise ValueError(f"截断数 n_cut 必须为正整数: {self.n_cut}")
        return self

    def with_j(self, j: float) -> 'ModelParams':
        """返回仅替换 J 的新参数"""
        return ModelParams(self.g, self.eta, j, self.n_cut)

    def with_n_cut(self, n_cut: int) -> 'ModelParams':
        """返回仅替换截断数的新参数"""
        return ModelParams(self.g, self.eta, self.j, n_cut)

    def describe(self) -> str:
        return f"g={self.g!r} eta={self.eta!r} J={self.j!r} ncut={self.n_cut}"


@dataclass(frozen=True)
class BasisIndex:
    """基矢标签 |n_L, n_R, s_L, s_R>"""

    n_l: int
    n_r: int
    s_l: int
    s_r: int


def basis_dim(params: ModelParams) -> int:
    """基矢维数 4·n_cut²"""
    params.validate()
    return 4 * params.n_cut ** 2


def encode_index(state: BasisIndex, n_cut: int) -> int:
    """
    基矢标签 -> 扁平下标

    index = ((n_l·n_cut + n_r)·2 + s_l)·2 + s_r

    Raises:
        ValueError: 标签越界
    """
    if not (0 <= state.n_l < n_cut and 0 <= state.n_r < n_cut):
        raise ValueError(f"光子数越界 (n_cut={n_cut}): {state}")
    if state.s_l not in (SPIN_DOWN, SPIN_UP) or state.s_r not in (SPIN_DOWN, SPIN_UP):
        raise ValueError(f"自旋标签只能为0或1: {state}")
    return ((state.n_l * n_cut + state.n_r) * 2 + state.s_l) * 2 + state.s_r


def decode_index(index: int, n_cut: int) -> BasisIndex:
    """
    扁平下标 -> 基矢标签

    Raises:
        ValueError: 下标越界
    """
    if not 0 <= index < 4 * n_cut ** 2:
        raise ValueError(f"下标越界: {index} (维数 {4 * n_cut ** 2})")
    rest, s_r = divmod(index, 2)
    rest, s_l = divmod(rest, 2)
    n_l, n_r = divmod(rest, n_cut)
    return BasisIndex(n_l, n_r, s_l, s_r)


def _label_arrays(n_cut: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """全部基矢的 (n_l, n_r, s_l, s_r) 数组，顺序与扁平下标一致"""
    index = np.arange(4 * n_cut ** 2)
    s_r = index % 2
    s_l = (index // 2) % 2
    n_r = (index // 4) % n_cut
    n_l = index // (4 * n_cut)
    return n_l, n_r, s_l, s_r


# 单体算符，Kronecker 顺序: 光子L ⊗ 光子R ⊗ 自旋L ⊗ 自旋R

def _annihilation(n_cut: int) -> sparse.csr_matrix:
    """截断的湮灭算符 a|n> = √n |n-1>"""
    if n_cut == 1:
        return sparse.csr_matrix((1, 1))
    amplitudes = np.sqrt(np.arange(1, n_cut, dtype=float))
    return sparse.diags(amplitudes, offsets=1, shape=(n_cut, n_cut), format='csr')


def _quadrature(n_cut: int) -> sparse.csr_matrix:
    """a + a†，越过 n_cut-1 的产生振幅直接舍弃"""
    a = _annihilation(n_cut)
    return (a + a.T).tocsr()


_SIGMA_Z = sparse.diags(np.array([-1.0, 1.0]), format='csr')
_SIGMA_X = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
_ID2 = sparse.identity(2, format='csr')


def _embed(photon_l, photon_r, spin_l, spin_r) -> sparse.csr_matrix:
    out = sparse.kron(photon_l, photon_r, format='csr')
    out = sparse.kron(out, spin_l, format='csr')
    return sparse.kron(out, spin_r, format='csr')


def quadrature_operator(params: ModelParams, cavity: str) -> sparse.csr_matrix:
    """
    单个腔的 (a + a†) 在全空间上的稀疏表示

    Args:
        params: 模型参数
        cavity: 'L' 或 'R'

    Returns:
        CSR 稀疏矩阵
    """
    params.validate()
    n = params.n_cut
    x = _quadrature(n)
    eye = sparse.identity(n, format='csr')
    if cavity == 'L':
        return _embed(x, eye, _ID2, _ID2)
    if cavity == 'R':
        return _embed(eye, x, _ID2, _ID2)
    raise ValueError(f"未知的腔: {cavity} (可选 L/R)")


def number_operator_diagonal(params: ModelParams, cavity: str) -> np.ndarray:
    """单个腔光子数算符的对角元"""
    params.validate()
    n_l, n_r, _, _ = _label_arrays(params.n_cut)
    if cavity == 'L':
        return n_l.astype(float)
    if cavity == 'R':
        return n_r.astype(float)
    raise ValueError(f"未知的腔: {cavity} (可选 L/R)")


@dataclass(frozen=True)
class SparseHamiltonian:
    """
    实对称稀疏哈密顿量（CSR 存储）

    组装后视为只读，可在多个读者之间共享。手工构造的矩阵可以不带
    params 和 parity，此时不能按宇称分区求解。
    """

    matrix: sparse.csr_matrix
    params: Optional[ModelParams] = None
    parity: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entries(self) -> Iterator[Tuple[int, int, float]]:
        """按行遍历存储的 (row, col, value) 三元组"""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            yield int(coo.row[k]), int(coo.col[k]), float(coo.data[k])

    def max_row_nnz(self) -> int:
        """每行非零元个数的最大值"""
        return int(np.diff(self.matrix.indptr).max()) if self.dim else 0

    def header(self) -> str:
        if self.params is None:
            return f"dim={self.dim}"
        p = self.params
        return f"dim={self.dim} g={p.g!r} eta={p.eta!r} J={p.j!r} ncut={p.n_cut}"

    def dump(self, path: str) -> None:
        """
        以 `row col value` 文本格式导出三元组（调试用）

        Args:
            path: 输出文件路径
        """
        with open(path, 'w', encoding='utf-8') as f:
            f.write(f"# {self.header()}\n")
            for r, c, v in self.entries():
                f.write(f"{r} {c} {v:.17g}\n")


def build_terms(params: ModelParams) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """
    组装与 J 无关的 H0 以及跃迁算符 H1

    Args:
        params: 模型参数（J 被忽略）

    Returns:
        (H0, H1)，均为 CSR 稀疏矩阵
    """
    params.validate()
    n = params.n_cut
    eye = sparse.identity(n, format='csr')
    number = sparse.diags(np.arange(n, dtype=float), format='csr')
    x = _quadrature(n)
    coupling = params.g * np.sqrt(params.eta) / 2.0

    h0 = (
        _embed(number, eye, _ID2, _ID2)
        + _embed(eye, number, _ID2, _ID2)
        + (params.eta / 2.0) * _embed(eye, eye, _SIGMA_Z, _ID2)
        + (params.eta / 2.0) * _embed(eye, eye, _ID2, _SIGMA_Z)
        - coupling * _embed(x, eye, _SIGMA_X, _ID2)
        - coupling * _embed(eye, x, _ID2, _SIGMA_X)
    )
    h1 = _embed(x, x, _ID2, _ID2)
    return _canonical(h0), _canonical(h1)


def _canonical(matrix) -> sparse.csr_matrix:
    out = sparse.csr_matrix(matrix)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def build_hamiltonian(params: ModelParams) -> SparseHamiltonian:
    """
    组装 H(J)/ω = H0 + J·H1

    Args:
        params: 模型参数

    Returns:
        带宇称信息的稀疏哈密顿量

    Raises:
        ValueError: 参数非法
    """
    h0, h1 = build_terms(params)
    return hamiltonian_from_terms(h0, h1, params, parity_operator(params))


def hamiltonian_from_terms(h0: sparse.csr_matrix, h1: sparse.csr_matrix, params: ModelParams,
                           parity: Optional[np.ndarray] = None) -> SparseHamiltonian:
    """由预先组装的 H0、H1 得到 J = params.j 处的哈密顿量，J 扫描时复用 H0 的结构"""
    matrix = _canonical(h0 + params.j * h1)
    return SparseHamiltonian(matrix=matrix, params=params, parity=parity)


def apply_hamiltonian(h: SparseHamiltonian, v: np.ndarray) -> np.ndarray:
    """
    计算 H·v

    Raises:
        ValueError: 向量长度与矩阵维数不一致
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != h.dim:
        raise ValueError(f"向量维数不匹配: {v.shape} vs dim={h.dim}")
    return h.matrix @ v


def parity_operator(params: ModelParams) -> np.ndarray:
    """
    总宇称 Π = σᶻ_L σᶻ_R (−1)^(n_L+n_R) 的对角元

    Returns:
        ±1 组成的浮点数组
    """
    params.validate()
    n_l, n_r, s_l, s_r = _label_arrays(params.n_cut)
    sz_l = 2 * s_l - 1
    sz_r = 2 * s_r - 1
    photon_sign = 1 - 2 * ((n_l + n_r) % 2)
    return (sz_l * sz_r * photon_sign).astype(float)


def swap_permutation(params: ModelParams) -> np.ndarray:
    """
    L↔R 交换对应的下标置换

    Returns:
        perm，使得 (Sv)[i] = v[perm[i]]
    """
    params.validate()
    n = params.n_cut
    n_l, n_r, s_l, s_r = _label_arrays(n)
    return ((n_r * n + n_l) * 2 + s_r) * 2 + s_l
