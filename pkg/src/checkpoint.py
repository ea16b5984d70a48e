"""
断点日志模块

扫描进度以 JSONL 追加写入：首条记录为表头（配置及其哈希），
其后每条记录对应一个完成的网格点。只追加不改写，进程崩溃时
最多损失最后一行，读取时跳过无法解析的行。
"""
import hashlib
import json
import os
from typing import Any, Dict, List, Optional, Tuple, Union

import jsonlines

HEADER_KIND = 'header'
POINT_KIND = 'point'


class CheckpointMismatchError(RuntimeError):
    """断点文件与当前配置不兼容"""


def point_key(mode: str, g: float, eta: float, j: float, n_cut: int,
              delta_j: float, seed: int) -> str:
    """
    网格点的记录键

    对 (mode, g, η, J, n_cut, δJ, seed) 的规范 JSON 串取 SHA-256，
    浮点数按 repr 序列化，保证同一网格点在不同运行间得到同一个键。
    """
    payload = json.dumps([mode, float(g), float(eta), float(j), int(n_cut),
                          float(delta_j), int(seed)])
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:32]


def config_digest(config: Dict[str, Any]) -> str:
    """配置字典的哈希（键排序后的 JSON）"""
    payload = json.dumps(config, sort_keys=True)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


class CheckpointLog:
    """断点日志读写"""

    def __init__(self, path: str):
        """
        Args:
            path: 断点文件路径
        """
        self.path = path
        self.errors: List[str] = []

    def exists(self) -> bool:
        return os.path.exists(self.path) and os.path.getsize(self.path) > 0

    def parse_line(self, line: Union[bytes, str], line_num: int) -> Optional[Dict[str, Any]]:
        """
        解析单行记录

        日志按字节读取，崩溃截断在多字节字符中间的行在这里解码失败并被跳过。

        Returns:
            记录字典，空行或解析失败返回None
        """
        line = line.strip()
        if not line:
            return None
        try:
            if isinstance(line, bytes):
                line = line.decode('utf-8')
            return jsonlines.Reader([line]).read(type=dict)
        except (UnicodeDecodeError, jsonlines.InvalidLineError) as e:
            self.errors.append(f"第{line_num}行: 记录解析失败 - {e}")
            return None

    def read(self) -> Tuple[Optional[Dict[str, Any]], Dict[str, Dict[str, Any]]]:
        """
        读取整个日志

        Returns:
            (表头记录, {记录键: 点记录})；同一键出现多次时以最后一条为准

        Raises:
            CheckpointMismatchError: 首条有效记录不是表头
        """
        self.errors = []
        header = None
        points: Dict[str, Dict[str, Any]] = {}
        if not self.exists():
            return header, points

        with open(self.path, 'rb') as f:
            for line_num, line in enumerate(f, start=1):
                record = self.parse_line(line, line_num)
                if record is None:
                    continue
                kind = record.get('kind')
                if header is None:
                    if kind != HEADER_KIND:
                        raise CheckpointMismatchError(f"断点文件缺少表头: {self.path}")
                    header = record
                elif kind == POINT_KIND and 'key' in record:
                    points[record['key']] = record

        if self.errors:
            print(f"警告: 断点文件中有 {len(self.errors)} 行无法解析，已跳过 ({self.path})")
        return header, points

    def read_header(self) -> Dict[str, Any]:
        """
        只读取表头

        Raises:
            FileNotFoundError: 文件不存在或为空
            CheckpointMismatchError: 首条记录不是表头
        """
        if not self.exists():
            raise FileNotFoundError(f"断点文件不存在: {self.path}")
        with open(self.path, 'rb') as f:
            for line_num, line in enumerate(f, start=1):
                record = self.parse_line(line, line_num)
                if record is None:
                    continue
                if record.get('kind') != HEADER_KIND:
                    break
                return record
        raise CheckpointMismatchError(f"断点文件缺少表头: {self.path}")

    def seal(self) -> None:
        """最后一行被截断（缺换行）时补上换行，使后续追加的记录独立成行"""
        if not self.exists():
            return
        with open(self.path, 'rb+') as f:
            f.seek(-1, os.SEEK_END)
            if f.read(1) != b'\n':
                f.write(b'\n')

    def start(self, config: Dict[str, Any], digest: str) -> None:
        """新建日志并写入表头（覆盖已有文件）"""
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with jsonlines.open(self.path, mode='w', flush=True) as writer:
            writer.write({'kind': HEADER_KIND, 'config_hash': digest, 'config': config})

    def append(self, record: Dict[str, Any]) -> None:
        """追加一条点记录并立即落盘"""
        with jsonlines.open(self.path, mode='a', flush=True) as writer:
            writer.write({'kind': POINT_KIND, **record})
