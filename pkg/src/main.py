"""
Rabi-dimer 临界性数值工具 - 主程序入口

命令行接口，按模式执行参数扫描并输出 CSV/报告
"""
import argparse
import os
import sys
from typing import Any, Dict, List, Optional

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.checkpoint import CheckpointMismatchError
from src.config import Config
from src.eigensolve import METHODS
from src.sweep import MODES, SweepConfig, SweepError, resume, run

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_INTERRUPTED = 130

# 命令行参数名 -> 配置键
OVERRIDE_KEYS = (
    'g', 'eta', 'j_grid', 'ncut', 'delta_j', 'seed', 'workers', 'out', 'checkpoint',
    'keep_going', 'tol', 'max_iter', 'sector', 'reorth', 'method', 'n_grid', 'nu', 'nu_scan',
)


def _common_parser() -> argparse.ArgumentParser:
    """各子命令共用的参数；默认值均为 None，只有显式给出的参数覆盖配置文件"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='配置文件路径 (默认: config/config.yaml)')
    common.add_argument('--g', type=str, help='耦合强度: 0.7 / 0.5,0.7 / 0:1:0.01')
    common.add_argument('--eta', type=str, help='频率比 η，写法同 --g，如 1100:1500:100')
    common.add_argument('--j-grid', dest='j_grid', type=str, help='J 网格 最小值:最大值:点数')
    common.add_argument('--ncut', type=int, help='每个腔的 Fock 截断数')
    common.add_argument('--delta-j', dest='delta_j', type=float, help='保真度差分步长 δJ')
    common.add_argument('--seed', type=int, help='Lanczos 起始向量的随机种子')
    common.add_argument('--workers', type=int, help='并行进程数')
    common.add_argument('--out', type=str, help='输出目录')
    common.add_argument('--checkpoint', type=str, help='断点文件 (默认: <out>/checkpoint.jsonl)')
    common.add_argument('--keep-going', dest='keep_going', action='store_const', const=True,
                        help='单点失败时记录并继续')
    common.add_argument('--tol', type=float, help='残差容差')
    common.add_argument('--max-iter', dest='max_iter', type=int, help='最大迭代步数')
    common.add_argument('--sector', type=int, choices=[1, -1, 0], help='宇称扇区 (0 表示不限制)')
    common.add_argument('--no-reorth', dest='reorth', action='store_const', const=False,
                        help='关闭完全再正交化')
    common.add_argument('--method', type=str, choices=list(METHODS), help='求解方法')
    common.add_argument('--n-grid', dest='n_grid', type=int, help='峰搜索粗网格点数')
    common.add_argument('--nu', type=float, help='数据塌缩使用的 ν')
    common.add_argument('--nu-scan', dest='nu_scan', type=str, help='ν 扫描区间，如 1.0:2.0:0.05')
    common.add_argument('--quiet', '-q', action='store_true', help='不打印进度')
    return common


def build_parser() -> argparse.ArgumentParser:
    """构造命令行解析器"""
    parser = argparse.ArgumentParser(
        prog='rabi-dimer',
        description="Rabi-dimer 超辐射相变数值工具 - 基态、保真度磁化率与有限频率标度",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例用法:
  # 基态可观测量扫描
  python src/main.py observables --g 0.7 --eta 1500 --j-grid 0.1:0.4:61 --ncut 40

  # χ_F 扫描（J 窗口自动取 [0.6·J_c, 1.4·J_c]）
  python src/main.py fs-scan --g 0.7 --eta 1100:1500:100 --ncut 80 --delta-j 1e-5

  # 标度分析，拟合 μ 并给出 ν = 2/μ
  python src/main.py scaling --g 0.7 --eta 1100:1500:100 --ncut 80 --delta-j 1e-5 --workers 8

  # 数据塌缩
  python src/main.py collapse --g 0.7 --eta 1100:1500:100 --nu 1.5

  # 平均场相边界
  python src/main.py phase-diagram --g 0:1:0.01

  # 从断点继续
  python src/main.py resume --checkpoint output/checkpoint.jsonl
        """
    )
    common = _common_parser()
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    helps = {
        'observables': '基态能量、光子数与 ⟨x²₋⟩',
        'fs-scan': '保真度与保真度磁化率 χ_F(J)',
        'scaling': 'χ_F 峰定位与标度指数拟合',
        'collapse': '有限频率数据塌缩',
        'phase-diagram': '平均场相边界 J_c(g)',
    }
    for mode in MODES:
        subparsers.add_parser(mode, parents=[common], help=helps[mode])
    subparsers.add_parser('resume', parents=[common], help='从断点文件继续上一次运行')
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key, None) for key in OVERRIDE_KEYS}


def main(argv: Optional[List[str]] = None) -> int:
    """
    主函数

    Returns:
        退出码: 0 成功，1 运行失败，2 配置错误，130 用户中断
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_INVALID
    verbose = not args.quiet

    try:
        if args.command == 'resume':
            if not args.checkpoint:
                print("错误: resume 需要 --checkpoint 参数")
                return EXIT_INVALID
            overrides = _overrides(args)
            overrides.pop('checkpoint')
            result = resume(args.checkpoint, overrides=overrides, verbose=verbose)
        else:
            if verbose:
                print("加载配置...")
            config = Config(args.config)
            sweep_config = SweepConfig.from_sources(args.command, config, _overrides(args))
            result = run(sweep_config, verbose=verbose)
    except KeyboardInterrupt:
        print("\n用户中断，已完成的网格点保存在断点文件中")
        return EXIT_INTERRUPTED
    except (ValueError, FileNotFoundError, CheckpointMismatchError) as e:
        print(f"错误: {e}")
        return EXIT_INVALID
    except SweepError as e:
        print(f"错误: {e}")
        print("提示: 使用 --keep-going 跳过失败的网格点")
        return EXIT_FAILURE
    except (RuntimeError, OSError) as e:
        print(f"错误: 运行失败 - {e}")
        return EXIT_FAILURE

    if result.failures:
        print(f"警告: {len(result.failures)} 个网格点失败，已在 flags 列中标记")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
