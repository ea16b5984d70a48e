"""
报告生成模块

负责生成标度分析报告（文本 + JSON）以及各类 CSV 结果表
"""
import json
import math
import os
from typing import Any, Dict, List, Sequence, Tuple

import pandas as pd

from src import __version__
from src.criticality import ScalingReport

RESULT_COLUMNS = ['g', 'eta', 'ncut', 'j', 'e0', 'n_l', 'n_r', 'x2_minus', 'fidelity', 'chi_f', 'flags']
# 17 位有效数字保证浮点数无损往返
FLOAT_FORMAT = '%.17g'


class ScalingReporter:
    """标度分析报告生成器"""

    def __init__(self):
        """初始化报告生成器"""
        self.report = ""

    def generate_report(self, reports: Sequence[ScalingReport]) -> str:
        """
        生成文本报告

        每个 g 一节: 首行 `g= mu= mu_stderr= nu= nu_stderr=`，其后每个 η 一行
        `eta= j_max= chi_max=`，最后一行为塌缩评分等附加项。

        Args:
            reports: 各 g 的 ScalingReport

        Returns:
            报告字符串
        """
        self.report = ""
        self._add_comment("Rabi-dimer 有限频率标度报告")
        self._add_comment(f"version {__version__}")
        for report in reports:
            self.report += "\n"
            self._add_section(report)
        return self.report

    def _add_comment(self, text: str):
        self.report += f"# {text}\n"

    def _add_line(self, *items: Tuple[str, Any]):
        self.report += ' '.join(f"{key}={_format_value(value)}" for key, value in items) + "\n"

    def _add_section(self, report: ScalingReport):
        """添加单个 g 的结果"""
        self._add_line(('g', report.g), ('mu', report.mu), ('mu_stderr', report.mu_stderr),
                       ('nu', report.nu), ('nu_stderr', report.nu_stderr))
        for eta, j_max, chi_max in zip(report.etas, report.j_max_per_eta, report.chi_max_per_eta):
            self._add_line(('eta', eta), ('j_max', j_max), ('chi_max', chi_max))
        self._add_line(('jc', report.jc), ('collapse_score', report.collapse_score),
                       ('nu_theory', report.nu_theory),
                       ('collapse_score_theory', report.collapse_score_theory),
                       ('flags', ';'.join(report.flags)))

    def save(self, reports: Sequence[ScalingReport], output_dir: str) -> Dict[str, str]:
        """
        写出 scaling_report.txt 与 scaling_report.json

        Returns:
            {'scaling_report': 文本路径, 'scaling_report_json': JSON 路径}
        """
        os.makedirs(output_dir, exist_ok=True)
        text_path = os.path.join(output_dir, 'scaling_report.txt')
        json_path = os.path.join(output_dir, 'scaling_report.json')
        with open(text_path, 'w', encoding='utf-8') as f:
            f.write(self.generate_report(reports))
        with open(json_path, 'w', encoding='utf-8') as f:
            json.dump({'version': __version__, 'reports': [r.to_dict() for r in reports]},
                      f, ensure_ascii=False, indent=2)
            f.write("\n")
        return {'scaling_report': text_path, 'scaling_report_json': json_path}


def _format_value(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (list, tuple)):
        return ','.join(_format_value(v) for v in value)
    return str(value)


def parse_report(text: str) -> List[Dict[str, Any]]:
    """
    读取文本报告

    Returns:
        每节一个字典: 各 `键=值` 的原始字符串，另有 'etas' 为每个 η 行的字典列表
    """
    sections: List[Dict[str, Any]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        fields = dict(token.partition('=')[::2] for token in line.split(' '))
        if 'g' in fields or not sections:
            sections.append({'etas': []})
        if 'eta' in fields:
            sections[-1]['etas'].append(fields)
        else:
            sections[-1].update(fields)
    return sections


def _write_frame(frame: pd.DataFrame, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='')
    return path


def write_results(rows: Sequence[Any], path: str) -> str:
    """
    写出结果表，按 (g, eta, j) 排序

    Args:
        rows: 带 to_dict() 的 ResultRow 序列
        path: 输出路径

    Returns:
        输出路径
    """
    records = [row.to_dict() for row in rows]
    frame = pd.DataFrame.from_records(records, columns=RESULT_COLUMNS)
    frame['flags'] = frame['flags'].map(lambda flags: ';'.join(flags) if flags else '')
    frame['ncut'] = frame['ncut'].astype(int)
    frame = frame.sort_values(['g', 'eta', 'j'], kind='mergesort').reset_index(drop=True)
    return _write_frame(frame, path)


def read_results(path: str) -> pd.DataFrame:
    """读回结果表，浮点数无损还原，空的 flags 读为空串"""
    frame = pd.read_csv(path, float_precision='round_trip')
    frame['flags'] = frame['flags'].fillna('').astype(str)
    return frame


def write_collapse(rows: Sequence[Sequence[float]], path: str) -> str:
    """写出塌缩数据 (g, eta, nu, u, y)"""
    frame = pd.DataFrame(list(rows), columns=['g', 'eta', 'nu', 'u', 'y'])
    frame = frame.sort_values(['g', 'eta', 'u'], kind='mergesort').reset_index(drop=True)
    return _write_frame(frame, path)


def write_collapse_scan(rows: Sequence[Sequence[float]], path: str) -> str:
    """写出 ν 扫描评分 (g, nu, score)"""
    frame = pd.DataFrame(list(rows), columns=['g', 'nu', 'score'])
    return _write_frame(frame, path)


def write_phase_diagram(rows: Sequence[Sequence[float]], path: str) -> str:
    """写出相边界 (g, j_c)"""
    frame = pd.DataFrame(list(rows), columns=['g', 'j_c'])
    return _write_frame(frame, path)
