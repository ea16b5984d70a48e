"""
基态求解模块

用 Lanczos 迭代（默认完全再正交化）求稀疏哈密顿量的低能本征对，
小规模实例提供稠密对角化作为对照。
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from src.model import SparseHamiltonian

# 稠密对角化允许的最大维数
DENSE_DIM_LIMIT = 4096
# 相邻本征值间隔小于此值时标记为简并
DEGENERACY_GAP = 1e-12
# β 相对于 T 的尺度低于此值视为 Krylov 子空间不变
BREAKDOWN_TOL = 1e-12
# 每隔多少步检查一次 Ritz 对的收敛
CHECK_EVERY = 4

METHODS = ('lanczos', 'arpack')


@dataclass(frozen=True)
class LanczosConfig:
    """Lanczos 求解设置"""

    max_iter: int = 500
    tol: float = 1e-10
    reorth: bool = True
    seed: int = 1234
    sector: Optional[int] = None
    method: str = 'lanczos'

    def validate(self) -> 'LanczosConfig':
        """
        校验求解设置

        Raises:
            ValueError: 设置非法
        """
        if not self.tol > 0:
            raise ValueError(f"tol 必须为正: {self.tol}")
        if self.max_iter < 2:
            raise ValueError(f"max_iter 至少为2: {self.max_iter}")
        if self.sector not in (None, 1, -1):
            raise ValueError(f"sector 只能为 +1、-1 或 None: {self.sector}")
        if self.method not in METHODS:
            raise ValueError(f"未知的求解方法: {self.method} (可选 {', '.join(METHODS)})")
        return self

    def with_sector(self, sector: Optional[int]) -> 'LanczosConfig':
        return replace(self, sector=sector)


@dataclass
class EigenResult:
    """收敛的本征对及残差诊断"""

    value: float
    vector: np.ndarray = field(repr=False)
    residual: float
    iterations: int
    converged: bool = True
    degenerate: bool = False
    sector: Optional[int] = None

    def dump(self, path: str, h: Optional[SparseHamiltonian] = None) -> None:
        """
        导出本征矢（调试用），每行一个分量

        Args:
            path: 输出文件路径
            h: 对应的哈密顿量，用于写入参数表头
        """
        prefix = h.header() if h is not None else f"dim={self.vector.size}"
        header = f"{prefix} E0={self.value!r} residual={self.residual!r}"
        np.savetxt(path, self.vector, fmt='%.17g', header=header, comments='# ')


class ConvergenceError(RuntimeError):
    """迭代次数用尽仍未收敛，result 为当前最好的近似"""

    def __init__(self, message: str, result: EigenResult):
        super().__init__(message)
        self.result = result


def _sector_mask(h: SparseHamiltonian, sector: Optional[int]) -> Optional[np.ndarray]:
    if sector is None:
        return None
    if h.parity is None:
        raise ValueError("该哈密顿量不带宇称信息，无法按扇区求解")
    return h.parity == sector


def _gauge(v: np.ndarray) -> np.ndarray:
    """令绝对值最大的分量为正"""
    if v[np.argmax(np.abs(v))] < 0:
        return -v
    return v


def _accepts(residual: float, value: float, tol: float) -> bool:
    return residual <= tol * max(1.0, abs(value))


def _residual(h: SparseHamiltonian, v: np.ndarray, value: float) -> float:
    return float(np.linalg.norm(h.matrix @ v - value * v))


def _flag_degenerate(results: List[EigenResult]) -> List[EigenResult]:
    for a, b in zip(results, results[1:]):
        if abs(b.value - a.value) < DEGENERACY_GAP:
            a.degenerate = b.degenerate = True
    return results


def _draw_vector(rng: np.random.Generator, n: int, mask: Optional[np.ndarray],
                 basis: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """
    生成均匀随机向量，投影到扇区并与已有基正交化

    投影后数值上为零时重新抽样，多次失败返回 None。
    """
    for _ in range(8):
        v = rng.uniform(-1.0, 1.0, n)
        if mask is not None:
            v[~mask] = 0.0
        reference = np.linalg.norm(v)
        if basis is not None and basis.shape[0]:
            for _ in range(2):
                v -= basis.T @ (basis @ v)
        norm = np.linalg.norm(v)
        if reference > 0 and norm > 1e-8 * reference:
            return v / norm
    return None


class _KrylovBasis:
    """按需扩容的 Lanczos 向量存储（行向量）"""

    def __init__(self, n: int, capacity: int):
        self._data = np.empty((max(capacity, 1), n))
        self.size = 0

    def append(self, q: np.ndarray) -> None:
        if self.size == self._data.shape[0]:
            grown = np.empty((2 * self._data.shape[0], self._data.shape[1]))
            grown[:self.size] = self._data
            self._data = grown
        self._data[self.size] = q
        self.size += 1

    @property
    def vectors(self) -> np.ndarray:
        return self._data[:self.size]


def _tridiagonal_lowest(alphas: List[float], betas: List[float], k: int):
    d = np.asarray(alphas)
    if d.size == 1:
        return d.copy(), np.ones((1, 1))
    e = np.asarray(betas[:d.size - 1])
    return linalg.eigh_tridiagonal(d, e, select='i', select_range=(0, k - 1))


def _ritz_pairs(h: SparseHamiltonian, basis: np.ndarray, theta: np.ndarray, s: np.ndarray,
                iterations: int, cfg: LanczosConfig) -> List[EigenResult]:
    results = []
    for i in range(theta.size):
        v = basis.T @ s[:, i]
        v = _gauge(v / np.linalg.norm(v))
        value = float(theta[i])
        residual = _residual(h, v, value)
        results.append(EigenResult(
            value=value,
            vector=v,
            residual=residual,
            iterations=iterations,
            converged=_accepts(residual, value, cfg.tol),
            sector=cfg.sector,
        ))
    return _flag_degenerate(results)


def _lanczos(h: SparseHamiltonian, cfg: LanczosConfig, k: int) -> List[EigenResult]:
    """
    带（可选）完全再正交化的 Lanczos 迭代

    Krylov 子空间提前不变时，用与已有基正交的新随机向量重启，
    使简并本征值的其余分量也能被找到。
    """
    mask = _sector_mask(h, cfg.sector)
    space_dim = int(mask.sum()) if mask is not None else h.dim
    if not 1 <= k <= space_dim:
        raise ValueError(f"k 必须在 1 到 {space_dim} 之间: {k}")
    depth_cap = min(cfg.max_iter, space_dim)

    rng = np.random.default_rng(cfg.seed)
    q = _draw_vector(rng, h.dim, mask)
    if q is None:
        raise ValueError(f"起始向量在宇称扇区 {cfg.sector} 上的投影为零")

    basis = _KrylovBasis(h.dim, min(depth_cap, 64))
    alphas: List[float] = []
    betas: List[float] = []
    last_restart = 0

    while True:
        basis.append(q)
        m = basis.size
        w = h.matrix @ q
        alpha = float(q @ w)
        w -= alpha * q
        if m > 1:
            w -= betas[-1] * basis.vectors[m - 2]
        if cfg.reorth:
            krylov = basis.vectors
            for _ in range(2):
                w -= krylov.T @ (krylov @ w)
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))

        scale = max(1.0, max(abs(a) for a in alphas), max(betas, default=0.0))
        exhausted = m >= depth_cap
        breakdown = beta <= BREAKDOWN_TOL * scale
        # 重启后新块至少走若干步，避免旧块的 Ritz 值提前"收敛"而漏掉简并分量
        settled = k == 1 or m - last_restart >= min(2 * k + 8, space_dim - last_restart)

        if m >= k and settled and (exhausted or breakdown or m % CHECK_EVERY == 0):
            theta, s = _tridiagonal_lowest(alphas, betas, k)
            estimates = np.abs(beta * s[-1, :])
            if np.all(estimates <= cfg.tol * np.maximum(1.0, np.abs(theta))):
                results = _ritz_pairs(h, basis.vectors, theta, s, m, cfg)
                if all(r.converged for r in results):
                    return results

        if exhausted:
            break
        if breakdown:
            q = _draw_vector(rng, h.dim, mask, basis.vectors)
            if q is None:
                break
            betas.append(0.0)
            last_restart = m
        else:
            q = w / beta
            betas.append(beta)

    m = basis.size
    theta, s = _tridiagonal_lowest(alphas, betas, min(k, m))
    results = _ritz_pairs(h, basis.vectors, theta, s, m, cfg)
    if len(results) == k and all(r.converged for r in results):
        return results
    worst = max(results, key=lambda r: r.residual / max(1.0, abs(r.value)))
    raise ConvergenceError(
        f"Lanczos 在 {m} 步后未收敛: E={worst.value!r} 残差={worst.residual:.3e} (tol={cfg.tol})",
        results[0],
    )


def _arpack(h: SparseHamiltonian, cfg: LanczosConfig, k: int) -> List[EigenResult]:
    """scipy 的隐式重启 Lanczos (ARPACK)，在扇区子块上求解"""
    mask = _sector_mask(h, cfg.sector)
    index = np.flatnonzero(mask) if mask is not None else np.arange(h.dim)
    block = h.matrix[index][:, index] if mask is not None else h.matrix
    n = index.size
    if not 1 <= k <= n:
        raise ValueError(f"k 必须在 1 到 {n} 之间: {k}")

    if k >= n - 1:
        # ARPACK 要求 k < n - 1
        if n > DENSE_DIM_LIMIT:
            raise ValueError(f"k={k} 过大，无法用 ARPACK 求解 (维数 {n})")
        values, vectors = linalg.eigh(block.toarray(), subset_by_index=[0, k - 1])
    else:
        v0 = np.random.default_rng(cfg.seed).uniform(-1.0, 1.0, n)
        ncv = min(n, max(2 * k + 1, 64))
        try:
            values, vectors = eigsh(block, k=k, which='SA', v0=v0, ncv=ncv,
                                    tol=0.1 * cfg.tol, maxiter=cfg.max_iter)
        except ArpackNoConvergence as err:
            values, vectors = err.eigenvalues, err.eigenvectors
            if values.size == 0:
                nan = EigenResult(float('nan'), np.full(h.dim, np.nan), float('inf'),
                                  cfg.max_iter, converged=False, sector=cfg.sector)
                raise ConvergenceError("ARPACK 未返回任何本征对", nan) from err

    order = np.argsort(values)
    results = []
    for i in order:
        v = np.zeros(h.dim)
        v[index] = vectors[:, i]
        v = _gauge(v / np.linalg.norm(v))
        value = float(values[i])
        residual = _residual(h, v, value)
        # ARPACK 不返回迭代次数
        results.append(EigenResult(value, v, residual, 0,
                                   converged=_accepts(residual, value, cfg.tol),
                                   sector=cfg.sector))
    results = _flag_degenerate(results)
    if len(results) < k or not all(r.converged for r in results):
        raise ConvergenceError(f"ARPACK 未收敛 (tol={cfg.tol})", results[0])
    return results


def ground_state(h: SparseHamiltonian, cfg: LanczosConfig) -> EigenResult:
    """
    求最低本征对

    Args:
        h: 稀疏哈密顿量
        cfg: 求解设置；设置 sector 时起始向量投影到该宇称扇区

    Returns:
        基态本征对，本征矢绝对值最大的分量为正

    Raises:
        ConvergenceError: max_iter 内未收敛（附带当前最好的近似）
        ValueError: 设置非法或扇区投影为零
    """
    return lowest_k_lanczos(h, 1, cfg)[0]


def lowest_k_lanczos(h: SparseHamiltonian, k: int, cfg: LanczosConfig) -> List[EigenResult]:
    """
    求最低的 k 个本征对，按本征值升序

    Args:
        h: 稀疏哈密顿量
        k: 本征对个数
        cfg: 求解设置

    Returns:
        EigenResult 列表；间隔小于 1e-12 的相邻本征值标记 degenerate
    """
    cfg.validate()
    if cfg.method == 'arpack':
        return _arpack(h, cfg, k)
    return _lanczos(h, cfg, k)


def lowest_k_dense(h: SparseHamiltonian, k: int, sector: Optional[int] = None) -> List[EigenResult]:
    """
    稠密对角化求最低 k 个本征对（测试对照用）

    Args:
        h: 稀疏哈密顿量，维数不超过 4096
        k: 本征对个数
        sector: 可选的宇称扇区，只对角化该块

    Returns:
        按本征值升序的 EigenResult 列表

    Raises:
        ValueError: 超出维数限制或 k 越界
    """
    if h.dim > DENSE_DIM_LIMIT:
        raise ValueError(f"稠密对角化维数超限: {h.dim} > {DENSE_DIM_LIMIT}")
    mask = _sector_mask(h, sector)
    index = np.flatnonzero(mask) if mask is not None else np.arange(h.dim)
    if not 1 <= k <= index.size:
        raise ValueError(f"k 必须在 1 到 {index.size} 之间: {k}")

    block = h.matrix.toarray()[np.ix_(index, index)]
    values, vectors = linalg.eigh(block, subset_by_index=[0, k - 1])
    results = []
    for i in range(k):
        v = np.zeros(h.dim)
        v[index] = vectors[:, i]
        v = _gauge(v / np.linalg.norm(v))
        value = float(values[i])
        results.append(EigenResult(value, v, _residual(h, v, value), 0, sector=sector))
    return _flag_degenerate(results)
