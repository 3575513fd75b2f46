import json
import math
import re
from pathlib import Path
from typing import Any, Union

import numpy as np


class ConfigError(ValueError):
    """配置或 JSON 文件格式错误，消息带 path:line:col 定位"""

    def __init__(self, source: str, line: int, col: int, message: str):
        super().__init__(f"{source}:{line}:{col}: {message}")
        self.source = source
        self.line = line
        self.col = col


def locate_key(text: str, key: str):
    """返回 "key" 在文本中第一次出现的 (行, 列)，找不到时返回 (1, 1)"""
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if not m:
        return 1, 1
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    return line, col


def extract_json_obj(s: str, source: str = "<string>") -> dict:
    """解析 JSON 对象，兼容 ```json 围栏；失败时抛出带行列号的 ConfigError"""
    if not s or not s.strip():
        raise ConfigError(source, 1, 1, "empty document")

    # 去除常见 markdown 围栏
    s = s.strip()
    if s.startswith("```"):
        s = re.sub(r"^```[a-zA-Z0-9]*\n?", "", s)
        s = re.sub(r"\n?```$", "", s).strip()

    try:
        obj = json.loads(s)
    except json.JSONDecodeError as e:
        raise ConfigError(source, e.lineno, e.colno, e.msg) from e
    if not isinstance(obj, dict):
        raise ConfigError(source, 1, 1, f"top level must be a JSON object, got {type(obj).__name__}")
    return obj


def load_json(path: Union[str, Path]) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return extract_json_obj(f.read(), str(path))


def to_builtin(value: Any) -> Any:
    """numpy 标量/数组、tuple 转成 json 可写的内置类型"""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        # NaN/inf 写成 null，保持严格 JSON
        return v if math.isfinite(v) else None
    return value


def dump_json(obj: Any, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_builtin(obj), f, ensure_ascii=False, indent=2, sort_keys=False)
        f.write("\n")
