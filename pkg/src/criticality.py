"""
临界性分析模块

平均场相边界与能量面，以及数值临界性流程：χ_F 峰定位、
有限频率标度指数拟合、数据塌缩评分。

平均场（以 ηω 为单位）:
    Λ = [[1−g², 2J], [2J, 1−g²]],   λ± = 1−g² ± 2J,   J_c = (1−g²)/2
    E±(x_L, x_R) = ½Σ_i (x_i² ± √(1+2g²x_i²)) + 2J·x_L·x_R

有限频率标度:
    χ_F(J_max) ∝ η^μ,   ν = 2/μ
    (χ_max − χ_F)/χ_F = f[η^{1/ν}(J − J_max)]
"""
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import optimize

from src.eigensolve import LanczosConfig
from src.fidelity import FsPoint, fidelity_susceptibility
from src.model import ModelParams
from src.utils.stats import StatsCalculator

# 默认峰搜索窗口 [0.6·J_c, 1.4·J_c]
WINDOW_LOW = 0.6
WINDOW_HIGH = 1.4
DEFAULT_N_GRID = 41
# 峰位细化的括号宽度
PEAK_XTOL = 1e-6
# 峰落在窗口端点时最多扩展的次数
MAX_WIDEN = 3
# 塌缩评分使用的公共网格点数
COLLAPSE_POINTS = 200
# |λ₋| 小于该值时视为临界
CRITICAL_TOL = 1e-12

Evaluator = Callable[[Sequence[float]], List[FsPoint]]


@dataclass(frozen=True)
class MeanFieldResult:
    """平均场分析结果"""

    g: float
    j: float
    jc: float
    lambda_plus: float
    lambda_minus: float

    def e_minus(self, x_l, x_r):
        """低能支能量面 E₋(x_L, x_R)，接受标量或数组"""
        return self._branch(x_l, x_r, -1.0)

    def e_plus(self, x_l, x_r):
        """高能支能量面 E₊(x_L, x_R)"""
        return self._branch(x_l, x_r, 1.0)

    def _branch(self, x_l, x_r, sign: float):
        x_l = np.asarray(x_l, dtype=float)
        x_r = np.asarray(x_r, dtype=float)
        g2 = self.g ** 2
        single = (x_l ** 2 + sign * np.sqrt(1.0 + 2.0 * g2 * x_l ** 2)
                  + x_r ** 2 + sign * np.sqrt(1.0 + 2.0 * g2 * x_r ** 2))
        out = 0.5 * single + 2.0 * self.j * x_l * x_r
        return float(out) if out.ndim == 0 else out

    def stability_matrix(self) -> np.ndarray:
        """原点处的稳定性矩阵 Λ"""
        d = 1.0 - self.g ** 2
        return np.array([[d, 2.0 * self.j], [2.0 * self.j, d]])

    @property
    def phase(self) -> str:
        if abs(self.lambda_minus) < CRITICAL_TOL:
            return 'critical'
        return 'normal' if self.lambda_minus > 0 else 'superradiant'


def critical_hopping(g: float) -> float:
    """平均场临界跃迁 J_c = (1−g²)/2"""
    if not g >= 0:
        raise ValueError(f"耦合强度 g 不能为负: {g}")
    return (1.0 - g * g) / 2.0


def mean_field(g: float, j: float) -> MeanFieldResult:
    """
    平均场分析

    Args:
        g: 无量纲耦合强度
        j: 腔间跃迁

    Returns:
        MeanFieldResult

    Raises:
        ValueError: g 或 j 为负
    """
    if not j >= 0:
        raise ValueError(f"腔间跃迁 J 不能为负: {j}")
    d = 1.0 - g * g
    return MeanFieldResult(
        g=g,
        j=j,
        jc=critical_hopping(g),
        lambda_plus=d + 2.0 * j,
        lambda_minus=d - 2.0 * j,
    )


def default_window(g: float) -> Tuple[float, float]:
    """
    峰搜索的默认 J 窗口 [0.6·J_c, 1.4·J_c]

    Raises:
        ValueError: g ≥ 1 时 J_c ≤ 0，无法给出默认窗口
    """
    jc = critical_hopping(g)
    if jc <= 0:
        raise ValueError(f"g={g} 时 J_c={jc} 不为正，需显式给出 J 窗口")
    return WINDOW_LOW * jc, WINDOW_HIGH * jc


@dataclass
class FsCurve:
    """固定 (g, η) 的 χ_F(J) 曲线及其峰"""

    g: float
    eta: float
    n_cut: int
    delta_j: float
    points: List[FsPoint]
    j_max: float
    chi_max: float
    window: Tuple[float, float] = (0.0, 0.0)
    edge_widened: bool = False
    multimodal: bool = False
    # 粗网格上全部局部极大值的 J
    local_maxima: List[float] = field(default_factory=list)

    @property
    def js(self) -> np.ndarray:
        return np.array([p.j for p in self.points])

    @property
    def chis(self) -> np.ndarray:
        return np.array([p.chi_f for p in self.points])

    def rescaled(self, nu: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        标度变换 u = η^{1/ν}(J − J_max), y = (χ_max − χ_F)/χ_F

        Raises:
            ValueError: ν 非正或曲线上存在非正的 χ_F
        """
        if not nu > 0:
            raise ValueError(f"nu 必须为正: {nu}")
        chis = self.chis
        if np.any(chis <= 0):
            raise ValueError(f"曲线上存在非正的 χ_F (g={self.g}, eta={self.eta})")
        u = self.eta ** (1.0 / nu) * (self.js - self.j_max)
        y = (self.chi_max - chis) / chis
        return u, y


# 子进程中执行的任务必须是模块级函数

def _chi_task(args) -> FsPoint:
    params, delta_j, cfg = args
    point = fidelity_susceptibility(params, delta_j, cfg)
    return replace(point, ground_state=None)


def fs_evaluator(g: float, eta: float, n_cut: int, delta_j: float, cfg: LanczosConfig,
                 workers: int = 1) -> Evaluator:
    """
    构造 Rabi-dimer 的批量 χ_F 求值器

    Args:
        g, eta, n_cut: 模型参数
        delta_j: 差分步长
        cfg: 求解设置
        workers: 进程数，1 表示在当前进程内顺序计算

    Returns:
        J 列表 -> FsPoint 列表（顺序与输入一致）
    """
    if workers < 1:
        raise ValueError(f"workers 至少为1: {workers}")

    def evaluate(js: Sequence[float]) -> List[FsPoint]:
        tasks = [(ModelParams(g, eta, float(j), n_cut), delta_j, cfg) for j in js]
        if workers == 1 or len(tasks) == 1:
            return [_chi_task(t) for t in tasks]
        return Parallel(n_jobs=workers)(delayed(_chi_task)(t) for t in tasks)

    return evaluate


def refine_peak(chi_at: Callable[[float], float], lower: float, upper: float,
                xtol: float = PEAK_XTOL) -> Tuple[float, float]:
    """
    在括号 [lower, upper] 内细化 χ_F 的极大值

    有界 Brent 法：三点抛物线插值，失败时退回黄金分割，括号宽度收缩到 xtol 量级。

    Returns:
        (j_max, chi_max)
    """
    if not upper > lower:
        raise ValueError(f"括号非法: [{lower}, {upper}]")
    result = optimize.minimize_scalar(
        lambda j: -chi_at(j),
        bounds=(lower, upper),
        method='bounded',
        options={'xatol': xtol / 2.0},
    )
    return float(result.x), float(-result.fun)


def _search_value(point: FsPoint) -> float:
    return point.chi_f if np.isfinite(point.chi_f) else -np.inf


def _grid(window: Tuple[float, float], n_grid: int) -> np.ndarray:
    lo, hi = window
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or hi <= lo:
        raise ValueError(f"J 窗口非法: [{lo}, {hi}]")
    return np.linspace(lo, hi, n_grid)


def locate_peak(g: float, eta: float, n_cut: int, delta_j: float,
                j_window: Optional[Tuple[float, float]] = None,
                cfg: Optional[LanczosConfig] = None, n_grid: int = DEFAULT_N_GRID,
                workers: int = 1, evaluator: Optional[Evaluator] = None) -> FsCurve:
    """
    定位 χ_F(J) 的峰

    先在窗口内做粗网格扫描，再在最大值两侧相邻网格点构成的括号内细化。
    峰落在窗口端点时向外扩展窗口（最多 MAX_WIDEN 次）并给出警告；
    粗网格上出现多个局部极大值时取全局最大并标记 multimodal。

    Args:
        g, eta, n_cut, delta_j: 模型与差分参数
        j_window: J 窗口，默认 [0.6·J_c, 1.4·J_c]
        cfg: 求解设置
        n_grid: 粗网格点数（至少3）
        workers: 粗网格并行进程数
        evaluator: 批量求值器，默认使用 fs_evaluator

    Returns:
        FsCurve

    Raises:
        ValueError: 窗口或网格设置非法
    """
    if n_grid < 3:
        raise ValueError(f"n_grid 至少为3: {n_grid}")
    window = tuple(j_window) if j_window is not None else default_window(g)
    if evaluator is None:
        evaluator = fs_evaluator(g, eta, n_cut, delta_j, cfg or LanczosConfig(), workers)

    cache: Dict[float, FsPoint] = {}

    def evaluate(js: Sequence[float]) -> List[FsPoint]:
        missing = [float(j) for j in js if float(j) not in cache]
        if missing:
            for j, point in zip(missing, evaluator(missing)):
                cache[j] = point
        return [cache[float(j)] for j in js]

    edge_widened = False
    for attempt in range(MAX_WIDEN + 1):
        js = _grid(window, n_grid)
        chis = np.array([_search_value(p) for p in evaluate(js)])
        if not np.any(np.isfinite(chis)):
            raise ValueError(f"窗口内全部网格点求值失败 (g={g}, eta={eta})")
        best = int(np.argmax(chis))
        at_lower = best == 0 and window[0] > 0
        at_upper = best == n_grid - 1
        if not (at_lower or at_upper) or attempt == MAX_WIDEN:
            break
        width = window[1] - window[0]
        if at_lower:
            window = (max(window[0] - width / 2.0, 0.0), window[1])
        else:
            window = (window[0], window[1] + width / 2.0)
        edge_widened = True
        print(f"警告: χ_F 峰落在窗口端点 (g={g}, eta={eta})，窗口扩展为 [{window[0]:.6g}, {window[1]:.6g}]")

    if best in (0, n_grid - 1):
        print(f"警告: 峰仍在窗口端点 J={js[best]:.6g} (g={g}, eta={eta})")

    maxima = StatsCalculator.local_maxima(chis)
    multimodal = len(maxima) > 1
    if multimodal:
        listed = ', '.join(f"{js[i]:.6g}" for i in maxima)
        print(f"警告: χ_F 曲线有多个局部极大值 (g={g}, eta={eta}): J = {listed}，取全局最大")

    lower = js[max(best - 1, 0)]
    upper = js[min(best + 1, n_grid - 1)]
    j_max, chi_max = refine_peak(lambda j: _search_value(evaluate([j])[0]), lower, upper)
    if chi_max < chis[best]:
        j_max, chi_max = float(js[best]), float(chis[best])

    grid_points = {float(j) for j in js}
    grid_points.add(j_max)
    # 求值失败的点不进入曲线
    points = sorted((cache[j] for j in grid_points if np.isfinite(cache[j].chi_f)), key=lambda p: p.j)
    return FsCurve(
        g=g,
        eta=eta,
        n_cut=n_cut,
        delta_j=delta_j,
        points=points,
        j_max=j_max,
        chi_max=chi_max,
        window=(float(window[0]), float(window[1])),
        edge_widened=edge_widened,
        multimodal=multimodal,
        local_maxima=[float(js[i]) for i in maxima],
    )


def fit_mu(points: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """
    拟合 χ_max ∝ η^μ

    Args:
        points: (eta, chi_max) 序列，至少3个且全部为正

    Returns:
        (mu, stderr)

    Raises:
        ValueError: 点数不足或存在非正值
    """
    points = list(points)
    if len(points) < 3:
        raise ValueError(f"拟合至少需要3个 (eta, chi_max) 点，实际为 {len(points)}")
    etas, chis = zip(*points)
    fit = StatsCalculator.loglog_fit(etas, chis)
    return fit['slope'], fit['slope_stderr']


def nu_from_mu(mu: float, mu_stderr: float = 0.0) -> Tuple[float, float]:
    """ν = 2/μ，误差按 |dν/dμ|·σ_μ = 2σ_μ/μ² 传递"""
    if not mu > 0:
        raise ValueError(f"mu 必须为正: {mu}")
    return 2.0 / mu, 2.0 * mu_stderr / mu ** 2


def collapse_score(curves: Sequence[FsCurve], nu: float, n_points: int = COLLAPSE_POINTS) -> float:
    """
    数据塌缩评分

    各曲线做标度变换后线性插值到公共重叠的 u 区间，
    返回逐点跨曲线标准差的均方根（越小塌缩越好）。

    Raises:
        ValueError: 曲线少于2条或 u 区间无重叠
    """
    curves = list(curves)
    if len(curves) < 2:
        raise ValueError(f"塌缩评分至少需要2条曲线，实际为 {len(curves)}")
    rescaled = [c.rescaled(nu) for c in curves]
    lo = max(u.min() for u, _ in rescaled)
    hi = min(u.max() for u, _ in rescaled)
    if not hi > lo:
        raise ValueError(f"标度变换后各曲线的 u 区间没有重叠 (nu={nu})")

    grid = np.linspace(lo, hi, n_points)
    samples = np.vstack([np.interp(grid, u, y) for u, y in rescaled])
    return StatsCalculator.rms(StatsCalculator.pointwise_spread(samples))


def rescale_rows(curves: Sequence[FsCurve], nu: float) -> List[Tuple[float, float, float, float, float]]:
    """各曲线标度变换后的 (g, eta, nu, u, y) 行"""
    rows = []
    for curve in curves:
        u, y = curve.rescaled(nu)
        rows.extend((curve.g, curve.eta, nu, float(a), float(b)) for a, b in zip(u, y))
    return rows


def scan_nu(curves: Sequence[FsCurve], nus: Sequence[float]) -> Tuple[float, List[Tuple[float, float]]]:
    """
    在一组 ν 上扫描塌缩评分

    Returns:
        (评分最小的 ν, [(nu, score), ...])
    """
    scores = [(float(nu), collapse_score(curves, nu)) for nu in nus]
    if not scores:
        raise ValueError("nu 扫描列表为空")
    best = min(scores, key=lambda item: item[1])
    return best[0], scores


@dataclass
class ScalingReport:
    """固定 g 的有限频率标度分析结果"""

    g: float
    etas: List[float]
    j_max_per_eta: List[float]
    chi_max_per_eta: List[float]
    mu: float
    mu_stderr: float
    nu: float
    nu_stderr: float
    collapse_score: float
    jc: Optional[float] = None
    nu_theory: float = 1.5
    collapse_score_theory: Optional[float] = None
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'g': self.g,
            'jc': self.jc,
            'etas': list(self.etas),
            'j_max_per_eta': list(self.j_max_per_eta),
            'chi_max_per_eta': list(self.chi_max_per_eta),
            'mu': self.mu,
            'mu_stderr': self.mu_stderr,
            'nu': self.nu,
            'nu_stderr': self.nu_stderr,
            'collapse_score': self.collapse_score,
            'nu_theory': self.nu_theory,
            'collapse_score_theory': self.collapse_score_theory,
            'flags': list(self.flags),
        }


def build_scaling_report(g: float, curves: Sequence[FsCurve], nu_theory: float = 1.5) -> ScalingReport:
    """
    由一组不同 η 的曲线生成标度报告

    Args:
        g: 耦合强度
        curves: 各 η 的 FsCurve（至少3条）
        nu_theory: 参照的理论 ν

    Returns:
        ScalingReport

    Raises:
        ValueError: 曲线不足或拟合得到非正的 μ
    """
    curves = sorted(curves, key=lambda c: c.eta)
    mu, mu_stderr = fit_mu([(c.eta, c.chi_max) for c in curves])
    nu, nu_stderr = nu_from_mu(mu, mu_stderr)

    flags = []
    for c in curves:
        if c.edge_widened:
            flags.append(f"edge_widened@eta={c.eta:g}")
        if c.multimodal:
            flags.append(f"multimodal@eta={c.eta:g}")

    return ScalingReport(
        g=g,
        etas=[c.eta for c in curves],
        j_max_per_eta=[c.j_max for c in curves],
        chi_max_per_eta=[c.chi_max for c in curves],
        mu=mu,
        mu_stderr=mu_stderr,
        nu=nu,
        nu_stderr=nu_stderr,
        collapse_score=collapse_score(curves, nu),
        jc=critical_hopping(g),
        nu_theory=nu_theory,
        collapse_score_theory=collapse_score(curves, nu_theory),
        flags=flags,
    )
