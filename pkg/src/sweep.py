"""
扫描调度模块

按模式调度参数网格，joblib 进程并行计算独立网格点，主进程作为唯一写者
追加断点日志并输出 CSV/报告。

模式:
    observables     每个 (g, η, J) 的基态可观测量
    fs-scan         额外计算保真度与 χ_F
    scaling         每个 η 定位 χ_F 峰，拟合 μ 并生成标度报告
    collapse        按 ν 做数据塌缩，输出 (u, y) 与 ν 扫描评分
    phase-diagram   平均场相边界 J_c(g)
"""
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml
from joblib import Parallel, delayed

from src import __version__
from src.checkpoint import CheckpointLog, CheckpointMismatchError, config_digest, point_key
from src.config import DEFAULTS, Config
from src.criticality import (
    FsCurve,
    build_scaling_report,
    critical_hopping,
    default_window,
    locate_peak,
    rescale_rows,
    scan_nu,
    collapse_score,
)
from src.eigensolve import ConvergenceError, LanczosConfig, ground_state
from src.fidelity import FidelityError, FsPoint, fidelity_susceptibility
from src.model import ModelParams, build_hamiltonian
from src.observables import observables_from_state
from src.reporter import ScalingReporter, write_collapse, write_collapse_scan, write_phase_diagram, write_results
from src.utils.grid_utils import GridParser

MODES = ('observables', 'fs-scan', 'scaling', 'collapse', 'phase-diagram')
# 需要 J 网格的模式
J_MODES = ('observables', 'fs-scan', 'scaling', 'collapse')
# 使用 χ_F 的模式
FS_MODES = ('fs-scan', 'scaling', 'collapse')
# 只影响运行方式、不影响数值结果的键，不计入配置哈希
RUNTIME_KEYS = ('workers', 'out', 'checkpoint', 'keep_going')

RESULTS_FILE = 'results.csv'
CHECKPOINT_FILE = 'checkpoint.jsonl'


class SweepError(RuntimeError):
    """网格点失败且未设置 keep_going"""


@dataclass
class SweepConfig:
    """一次扫描运行的完整配置"""

    mode: str
    g_values: List[float]
    eta_values: List[float]
    j_grid: Optional[Tuple[float, float, int]] = None
    n_cut: int = 80
    delta_j: float = 1e-5
    seed: int = 1234
    workers: int = 1
    out: str = 'output'
    checkpoint: Optional[str] = None
    keep_going: bool = False
    tol: float = 1e-10
    max_iter: int = 2000
    sector: Optional[int] = 1
    reorth: bool = True
    method: str = 'lanczos'
    n_grid: int = 41
    nu: float = 1.5
    nu_scan: List[float] = field(default_factory=list)

    @classmethod
    def from_sources(cls, mode: str, config: Config, overrides: Optional[Dict[str, Any]] = None) -> 'SweepConfig':
        """
        由配置文件与命令行参数构造并校验

        Args:
            mode: 运行模式
            config: 已加载的配置
            overrides: 命令行参数，值为 None 的键不覆盖

        Raises:
            ValueError: 配置非法
        """
        config.apply_overrides(overrides or {})
        return cls.from_mapping(mode, config.as_dict())

    @classmethod
    def from_mapping(cls, mode: str, mapping: Dict[str, Any]) -> 'SweepConfig':
        """
        由配置文件风格的扁平键（与命令行参数同名）构造并校验

        Raises:
            ValueError: 缺少键或取值非法
        """
        merged = {**DEFAULTS, **{k: v for k, v in mapping.items() if v is not None}}
        j_grid = mapping.get('j_grid')
        sector = merged['sector']
        try:
            built = cls(
                mode=mode,
                g_values=GridParser.parse_values(merged['g']),
                eta_values=GridParser.parse_values(merged['eta']),
                j_grid=GridParser.parse_j_grid(j_grid) if j_grid is not None else None,
                n_cut=_as_int(merged['ncut'], 'ncut'),
                delta_j=float(merged['delta_j']),
                seed=_as_int(merged['seed'], 'seed'),
                workers=_as_int(merged['workers'], 'workers'),
                out=str(merged['out']),
                checkpoint=merged['checkpoint'],
                keep_going=bool(merged['keep_going']),
                tol=float(merged['tol']),
                max_iter=_as_int(merged['max_iter'], 'max_iter'),
                sector=None if sector == 0 else _as_int(sector, 'sector'),
                reorth=bool(merged['reorth']),
                method=str(merged['method']),
                n_grid=_as_int(merged['n_grid'], 'n_grid'),
                nu=float(merged['nu']),
                nu_scan=GridParser.parse_values(merged['nu_scan']),
            )
        except (TypeError, ValueError) as e:
            raise ValueError(f"配置解析失败 - {e}") from e
        return built.validate()

    def to_mapping(self) -> Dict[str, Any]:
        """与 from_mapping 互逆的扁平键表示，写入断点表头"""
        return {
            'g': list(self.g_values),
            'eta': list(self.eta_values),
            'j_grid': list(self.j_grid) if self.j_grid is not None else None,
            'ncut': self.n_cut,
            'delta_j': self.delta_j,
            'seed': self.seed,
            'workers': self.workers,
            'out': self.out,
            'checkpoint': self.checkpoint,
            'keep_going': self.keep_going,
            'tol': self.tol,
            'max_iter': self.max_iter,
            'sector': 0 if self.sector is None else self.sector,
            'reorth': self.reorth,
            'method': self.method,
            'n_grid': self.n_grid,
            'nu': self.nu,
            'nu_scan': list(self.nu_scan),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {'mode': self.mode, **self.to_mapping()}

    def config_hash(self) -> str:
        """影响数值结果的配置项的哈希"""
        data = {k: v for k, v in self.to_dict().items() if k not in RUNTIME_KEYS}
        return config_digest(data)

    def validate(self) -> 'SweepConfig':
        """
        校验配置

        Raises:
            ValueError: 任一设置非法
        """
        if self.mode not in MODES:
            raise ValueError(f"未知的模式: {self.mode} (可选 {', '.join(MODES)})")
        if not self.g_values:
            raise ValueError("g 网格为空")
        if any(not math.isfinite(g) or g < 0 for g in self.g_values):
            raise ValueError(f"g 必须为非负有限数: {self.g_values}")
        if self.workers < 1:
            raise ValueError(f"workers 至少为1: {self.workers}")
        if self.mode == 'phase-diagram':
            return self

        if not self.eta_values:
            raise ValueError("eta 网格为空")
        if any(not math.isfinite(e) or e <= 0 for e in self.eta_values):
            raise ValueError(f"eta 必须为正: {self.eta_values}")
        if self.mode == 'scaling' and len(self.eta_values) < 3:
            raise ValueError(f"scaling 模式至少需要3个 eta，实际为 {len(self.eta_values)}")
        if self.mode == 'collapse' and len(self.eta_values) < 2:
            raise ValueError(f"collapse 模式至少需要2个 eta，实际为 {len(self.eta_values)}")
        if self.n_cut < 1:
            raise ValueError(f"ncut 必须为正整数: {self.n_cut}")
        if not self.delta_j > 0:
            raise ValueError(f"delta_j 必须为正: {self.delta_j}")
        if self.n_grid < 3:
            raise ValueError(f"n_grid 至少为3: {self.n_grid}")
        if not self.nu > 0 or any(not nu > 0 for nu in self.nu_scan):
            raise ValueError(f"nu 必须为正: nu={self.nu}, nu_scan={self.nu_scan}")
        self.solver()

        if self.j_grid is not None:
            lo, hi, count = self.j_grid
            if count < 1:
                raise ValueError(f"J 网格为空: {self.j_grid}")
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0:
                raise ValueError(f"J 网格端点非法: {self.j_grid}")
            if (count > 1 and not hi > lo) or (count == 1 and hi != lo):
                raise ValueError(f"J 网格必须严格递增: {self.j_grid}")
            if self.mode in ('scaling', 'collapse') and count < 3:
                raise ValueError(f"峰搜索至少需要3个 J 点: {self.j_grid}")
        else:
            for g in self.g_values:
                default_window(g)
        return self

    def solver(self) -> LanczosConfig:
        """求解设置"""
        return LanczosConfig(
            max_iter=self.max_iter,
            tol=self.tol,
            reorth=self.reorth,
            seed=self.seed,
            sector=self.sector,
            method=self.method,
        ).validate()

    def j_window(self, g: float) -> Tuple[float, float]:
        if self.j_grid is not None:
            return self.j_grid[0], self.j_grid[1]
        return default_window(g)

    def j_count(self) -> int:
        return self.j_grid[2] if self.j_grid is not None else self.n_grid

    def j_values(self, g: float) -> List[float]:
        lo, hi = self.j_window(g)
        return GridParser.linspace(lo, hi, self.j_count())

    def checkpoint_path(self) -> str:
        return self.checkpoint or os.path.join(self.out, CHECKPOINT_FILE)


def _as_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or value is None or int(value) != float(value):
        raise ValueError(f"{name} 必须为整数: {value!r}")
    return int(value)


@dataclass
class ResultRow:
    """结果表的一行"""

    g: float
    eta: float
    ncut: int
    j: float
    e0: float
    n_l: float
    n_r: float
    x2_minus: float
    fidelity: float
    chi_f: float
    flags: List[str] = field(default_factory=list)

    COLUMNS = ('g', 'eta', 'ncut', 'j', 'e0', 'n_l', 'n_r', 'x2_minus', 'fidelity', 'chi_f', 'flags')

    @property
    def chi_f_rescaled(self) -> float:
        """χ_F/η"""
        return self.chi_f / self.eta

    @classmethod
    def from_record(cls, record: Dict[str, Any], extra_flags: Sequence[str] = ()) -> 'ResultRow':
        values = record.get('values', {})
        nan = float('nan')
        return cls(
            g=record['g'],
            eta=record['eta'],
            ncut=record['n_cut'],
            j=record['j'],
            e0=_nan_if_none(values.get('e0')),
            n_l=_nan_if_none(values.get('n_l')),
            n_r=_nan_if_none(values.get('n_r')),
            x2_minus=_nan_if_none(values.get('x2_minus')),
            fidelity=_nan_if_none(values.get('fidelity', nan)),
            chi_f=_nan_if_none(values.get('chi_f', nan)),
            flags=list(record.get('flags', [])) + list(extra_flags),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.COLUMNS}


def _nan_if_none(value: Any) -> float:
    return float('nan') if value is None else float(value)


@dataclass(frozen=True)
class PointTask:
    """单个网格点的计算任务（可跨进程传递）"""

    mode: str
    g: float
    eta: float
    j: float
    n_cut: int
    delta_j: float
    solver: LanczosConfig

    @property
    def key(self) -> str:
        return point_key(self.mode, self.g, self.eta, self.j, self.n_cut, self.delta_j, self.solver.seed)


def compute_point(task: PointTask) -> Dict[str, Any]:
    """
    计算一个网格点，返回断点记录

    求解失败不抛出，而是记录为 status='failed' 并附带标志，由调度方决定是否中止。
    """
    params = ModelParams(task.g, task.eta, task.j, task.n_cut)
    record = {
        'key': task.key,
        'mode': task.mode,
        'g': task.g,
        'eta': task.eta,
        'j': task.j,
        'n_cut': task.n_cut,
        'delta_j': task.delta_j,
        'seed': task.solver.seed,
    }
    try:
        values = {}
        if task.mode in FS_MODES:
            point = fidelity_susceptibility(params, task.delta_j, task.solver)
            state = point.ground_state
            values.update(fidelity=point.fidelity, chi_f=point.chi_f, infidelity=point.infidelity)
        else:
            state = ground_state(build_hamiltonian(params), task.solver)
        observed = observables_from_state(state, params)
        values.update(e0=observed.e0, n_l=observed.n_photon_l, n_r=observed.n_photon_r,
                      x2_minus=observed.x2_minus, x2_plus=observed.x2_plus, residual=observed.residual)
        flags = []
        if observed.truncation_pressure:
            flags.append('truncation_pressure')
        if state.degenerate:
            flags.append('degenerate')
        record.update(status='ok', values=values, flags=flags)
    except ConvergenceError as e:
        record.update(status='failed', values={}, flags=['nonconverged'], error=str(e))
    except FidelityError as e:
        record.update(status='failed', values={}, flags=['zero_overlap'], error=str(e))
    except (ValueError, ArithmeticError) as e:
        record.update(status='failed', values={}, flags=['error'], error=str(e))
    return record


class PointStore:
    """
    网格点结果缓存

    先查断点日志，缺失的点交给 joblib 进程并行计算，结果按提交顺序
    逐条返回主进程，由主进程追加到日志。
    """

    def __init__(self, config: SweepConfig, log: CheckpointLog, records: Dict[str, Dict[str, Any]],
                 workers: int = 1):
        self.config = config
        self.log = log
        self.records = records
        self.workers = workers
        self.reused = 0
        self.computed = 0
        self.failures: List[str] = []

    def fetch(self, tasks: Sequence[PointTask]) -> List[Dict[str, Any]]:
        """
        取得一批网格点的记录，顺序与输入一致

        Raises:
            SweepError: 存在失败点且未设置 keep_going
        """
        missing = [t for t in tasks if t.key not in self.records]
        self.reused += len(tasks) - len(missing)
        if missing:
            if self.workers > 1 and len(missing) > 1:
                parallel = Parallel(n_jobs=self.workers, return_as='generator')
                results = parallel(delayed(compute_point)(t) for t in missing)
            else:
                results = map(compute_point, missing)
            for record in results:
                self.log.append(record)
                self.records[record['key']] = record
                self.computed += 1
                if record['status'] != 'ok':
                    self._report_failure(record)
        return [self.records[t.key] for t in tasks]

    def _report_failure(self, record: Dict[str, Any]) -> None:
        label = f"g={record['g']} eta={record['eta']} J={record['j']!r}"
        message = f"{label}: {record.get('error', '未知错误')}"
        self.failures.append(message)
        if not self.config.keep_going:
            raise SweepError(f"网格点失败 {message}")
        print(f"警告: 网格点失败已跳过 ({','.join(record['flags'])}) {message}")

    def tasks(self, g: float, eta: float, js: Sequence[float]) -> List[PointTask]:
        cfg = self.config
        solver = cfg.solver()
        return [PointTask(cfg.mode, g, eta, float(j), cfg.n_cut, cfg.delta_j, solver) for j in js]

    def evaluator(self, g: float, eta: float):
        """locate_peak 使用的批量求值器"""

        def evaluate(js: Sequence[float]) -> List[FsPoint]:
            points = []
            for record in self.fetch(self.tasks(g, eta, js)):
                values = record.get('values', {})
                points.append(FsPoint(
                    j=record['j'],
                    chi_f=values.get('chi_f', float('nan')),
                    delta_j=record['delta_j'],
                    fidelity=values.get('fidelity', float('nan')),
                    infidelity=values.get('infidelity', float('nan')),
                ))
            return points

        return evaluate


@dataclass
class SweepResult:
    """一次运行的结果摘要"""

    status: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    computed: int = 0
    reused: int = 0


def _open_log(config: SweepConfig) -> Tuple[CheckpointLog, Dict[str, Dict[str, Any]]]:
    log = CheckpointLog(config.checkpoint_path())
    digest = config.config_hash()
    header, records = log.read()
    if header is None:
        log.start(config.to_dict(), digest)
        return log, {}
    if header.get('config_hash') != digest:
        raise CheckpointMismatchError(
            f"断点文件 {log.path} 与当前配置不一致，拒绝混合不同配置的结果"
            f" (断点 {str(header.get('config_hash'))[:12]} != 当前 {digest[:12]})"
        )
    log.seal()
    return log, records


def _write_meta(config: SweepConfig, path: str, extra: Dict[str, Any]) -> None:
    meta = {
        'version': __version__,
        'mode': config.mode,
        'config_hash': config.config_hash(),
        'config': config.to_dict(),
        'solver': asdict(config.solver()),
    }
    meta.update(extra)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(meta, f, default_flow_style=False, allow_unicode=True, sort_keys=False)


def _grid_rows(config: SweepConfig, store: PointStore, verbose: bool) -> Tuple[List[ResultRow], Dict[str, Any]]:
    rows = []
    windows = {}
    for g in config.g_values:
        js = config.j_values(g)
        windows[repr(g)] = [js[0], js[-1]]
        for eta in config.eta_values:
            if verbose:
                print(f"  g={g} eta={eta}: {len(js)} 个 J 点")
            for record in store.fetch(store.tasks(g, eta, js)):
                rows.append(ResultRow.from_record(record))
    return rows, {'j_windows': windows}


def _curve_rows(curve: FsCurve, store: PointStore, verbose: bool = False) -> List[ResultRow]:
    tasks = store.tasks(curve.g, curve.eta, [p.j for p in curve.points])
    rows = []
    for record in store.fetch(tasks):
        extra = []
        if record['j'] == curve.j_max:
            extra.append('peak')
            if curve.edge_widened:
                extra.append('edge_widened')
            if curve.multimodal:
                extra.append('multimodal')
        row = ResultRow.from_record(record, extra)
        if verbose and 'peak' in extra:
            print(f"    eta={row.eta}: J_max={row.j:.8f}  χ_max={row.chi_f:.6g}  χ_max/η={row.chi_f_rescaled:.6g}")
        rows.append(row)
    return rows


def _curves(config: SweepConfig, store: PointStore, verbose: bool) -> Dict[float, List[FsCurve]]:
    curves = {}
    for g in config.g_values:
        curves[g] = []
        for eta in config.eta_values:
            if verbose:
                print(f"  定位 χ_F 峰: g={g} eta={eta}")
            curve = locate_peak(
                g, eta, config.n_cut, config.delta_j,
                j_window=config.j_window(g),
                n_grid=config.j_count(),
                evaluator=store.evaluator(g, eta),
            )
            curves[g].append(curve)
    return curves


def run(config: SweepConfig, verbose: bool = True) -> SweepResult:
    """
    执行一次扫描

    已存在且配置哈希一致的断点文件会被续用，只计算缺失的网格点。

    Args:
        config: 已校验的配置
        verbose: 是否打印进度

    Returns:
        SweepResult

    Raises:
        ValueError: 配置非法
        CheckpointMismatchError: 断点文件与配置不一致
        SweepError: 网格点失败且未设置 keep_going
    """
    config.validate()
    out = config.out
    artifacts: Dict[str, str] = {}

    if verbose:
        print("\n" + "=" * 60)
        print(f"运行模式: {config.mode}")
        print("=" * 60)

    if config.mode == 'phase-diagram':
        os.makedirs(out, exist_ok=True)
        rows = [(g, critical_hopping(g)) for g in config.g_values]
        artifacts['phase_diagram'] = write_phase_diagram(rows, os.path.join(out, 'phase_diagram.csv'))
        artifacts['run_meta'] = os.path.join(out, 'run_meta.yaml')
        _write_meta(config, artifacts['run_meta'], {})
        if verbose:
            print(f"相边界: {len(rows)} 个 g 点 -> {artifacts['phase_diagram']}")
        return SweepResult(status=0, artifacts=artifacts)

    os.makedirs(out, exist_ok=True)
    log, records = _open_log(config)
    if verbose and records:
        print(f"续用断点: {log.path} ({len(records)} 个已完成的网格点)")

    store = PointStore(config, log, records, config.workers)
    meta: Dict[str, Any] = {}
    if config.mode in ('observables', 'fs-scan'):
        rows, meta = _grid_rows(config, store, verbose)
    else:
        curves = _curves(config, store, verbose)
        rows = [row for group in curves.values() for c in group for row in _curve_rows(c, store, verbose)]
        meta['j_windows'] = {repr(g): [list(c.window) for c in group] for g, group in curves.items()}
        if config.mode == 'scaling':
            artifacts.update(_scaling_artifacts(config, curves, verbose))
        else:
            artifacts.update(_collapse_artifacts(config, curves, meta, verbose))

    artifacts['results'] = write_results(rows, os.path.join(out, RESULTS_FILE))
    artifacts['checkpoint'] = log.path
    artifacts['run_meta'] = os.path.join(out, 'run_meta.yaml')
    _write_meta(config, artifacts['run_meta'], meta)

    if verbose:
        print(f"\n完成: 新计算 {store.computed} 个点，续用 {store.reused} 个点，失败 {len(store.failures)} 个")
        for name, path in artifacts.items():
            print(f"  {name}: {path}")
    return SweepResult(status=0, artifacts=artifacts, failures=store.failures,
                       computed=store.computed, reused=store.reused)


def _scaling_artifacts(config: SweepConfig, curves: Dict[float, List[FsCurve]], verbose: bool) -> Dict[str, str]:
    reports = [build_scaling_report(g, group, config.nu) for g, group in curves.items()]
    reporter = ScalingReporter()
    if verbose:
        for report in reports:
            print(f"  g={report.g}: μ = {report.mu:.4f} ± {report.mu_stderr:.4f}, "
                  f"ν = {report.nu:.4f} ± {report.nu_stderr:.4f}")
    return reporter.save(reports, config.out)


def _collapse_artifacts(config: SweepConfig, curves: Dict[float, List[FsCurve]],
                        meta: Dict[str, Any], verbose: bool) -> Dict[str, str]:
    collapse_rows = []
    scan_rows = []
    summary = {}
    for g, group in curves.items():
        collapse_rows.extend(rescale_rows(group, config.nu))
        score = collapse_score(group, config.nu)
        entry = {'nu': config.nu, 'score': score}
        if config.nu_scan:
            best, scores = scan_nu(group, config.nu_scan)
            scan_rows.extend((g, nu, s) for nu, s in scores)
            entry['best_nu'] = best
        summary[repr(g)] = entry
        if verbose:
            best_text = f", 最优 ν = {entry['best_nu']:.3f}" if 'best_nu' in entry else ''
            print(f"  g={g}: 塌缩评分(ν={config.nu}) = {score:.6g}{best_text}")
    meta['collapse'] = summary

    out = config.out
    artifacts = {'collapse': write_collapse(collapse_rows, os.path.join(out, 'collapse.csv'))}
    if scan_rows:
        artifacts['collapse_scan'] = write_collapse_scan(scan_rows, os.path.join(out, 'collapse_scan.csv'))
    return artifacts


def resume(checkpoint: str, config: Optional[SweepConfig] = None,
           overrides: Optional[Dict[str, Any]] = None, verbose: bool = True) -> SweepResult:
    """
    从断点继续一次运行

    Args:
        checkpoint: 断点文件路径
        config: 期望的配置；给出时必须与断点表头的哈希一致
        overrides: 覆盖表头配置的扁平键（与命令行参数同名）；
            改变数值相关的键会导致哈希不一致
        verbose: 是否打印进度

    Returns:
        SweepResult；已完成的运行不会重新计算任何点

    Raises:
        FileNotFoundError: 断点文件不存在
        CheckpointMismatchError: 配置与断点不一致
    """
    header = CheckpointLog(checkpoint).read_header()
    if config is None:
        stored = dict(header.get('config', {}))
        mode = stored.pop('mode', None)
        if mode is None:
            raise CheckpointMismatchError(f"断点表头缺少运行模式: {checkpoint}")
        stored.update({k: v for k, v in (overrides or {}).items() if v is not None})
        config = SweepConfig.from_mapping(mode, stored)
    config = replace(config, checkpoint=checkpoint)
    if config.config_hash() != header.get('config_hash'):
        raise CheckpointMismatchError(f"配置与断点文件 {checkpoint} 不一致，拒绝续算")
    return run(config, verbose)
