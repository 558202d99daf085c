import dataclasses
import enum
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from core.exceptions import FhnConfigError

CONFIG_DIR = Path(__file__).parent.parent / "config"
TESTDATA_DIR = Path(__file__).parent.parent / "tests" / "testdata"

# 配置键 -> 类型；key=value 文件、JSON 配置档与 CLI 共用
CONFIG_KEYS: Dict[str, str] = {
    "a": "float", "gamma": "float", "mu": "float", "I": "float",
    "v0": "float", "w0": "float", "tau": "float", "T": "float",
    "N": "int", "n_sub": "int", "tol": "float", "degrees": "int_list",
    "out": "str", "format": "str",
}


def load_yaml_cases(yaml_file_name: str, case_key: str) -> List[Dict[str, Any]]:
    """
    加载 tests/testdata/ 下的 yaml 用例，返回 case_key 下的用例列表
    每条用例必须包含 desc（字符串）、data（字典）、assert_config（列表）
    """
    yaml_path = TESTDATA_DIR / yaml_file_name
    try:
        with open(yaml_path, encoding="utf-8") as f:
            yaml_data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise FileNotFoundError(f"未找到YAML文件：{yaml_path}")
    except yaml.YAMLError as e:
        raise ValueError(f"YAML格式错误：{yaml_path}，错误：{str(e)}")

    if case_key not in yaml_data:
        raise KeyError(f"未找到用例键：{case_key}，可用键：{list(yaml_data.keys())}")
    cases = yaml_data[case_key]
    for idx, case in enumerate(cases):
        if not isinstance(case.get("desc"), str):
            raise ValueError(f"第{idx + 1}条用例缺少字符串字段：desc")
        if not isinstance(case.get("data"), dict) or not isinstance(case.get("assert_config"), list):
            raise ValueError(f"第{idx + 1}条用例的 data 必须是字典、assert_config 必须是列表")
    return cases


def parse_yaml_to_params(yaml_file: str, case_key: str) -> Tuple[List[str], List[tuple], List[str]]:
    """转换为 pytest.mark.parametrize 的 (参数名, 参数值, 用例ID)；缺失的 data 键填 None"""
    cases = load_yaml_cases(yaml_file, case_key)
    if not cases:
        raise ValueError(f"{case_key} 下无测试用例")

    data_keys = sorted({key for case in cases for key in case["data"]})
    param_names = data_keys + ["assert_config"]
    param_values = [tuple(case["data"].get(key) for key in data_keys) + (case["assert_config"],) for case in cases]
    case_ids = [case["desc"].strip() for case in cases]
    return param_names, param_values, case_ids


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"类型 {type(obj).__name__} 不可序列化")


def format_python_to_json(data: Any, indent: int = 4, ensure_ascii: bool = False, sort_keys: bool = False) -> str:
    """
    Python/numpy 数据 -> 格式化 JSON 字符串
    numpy 标量与数组、复数（[re, im]）、枚举、dataclass 均可直接传入；float 以 repr 输出，回读逐位一致
    不可序列化时抛出 TypeError
    """
    return json.dumps(data, indent=indent, ensure_ascii=ensure_ascii, sort_keys=sort_keys,
                      default=_to_jsonable, allow_nan=False)


def read_json_file(file_path: Union[str, Path], encoding: str = "utf-8") -> Dict[str, Any]:
    """读取 JSON 配置文件，根节点必须是对象"""
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"JSON 文件不存在,请确认是否保存在config目录：{file_path}")
    if not os.path.isfile(file_path):
        raise IsADirectoryError(f"指定路径不是文件：{file_path}")
    try:
        with open(file_path, "r", encoding=encoding) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise FhnConfigError(f"JSON 格式错误：{file_path}：{str(e)}") from e
    if not isinstance(data, dict):
        raise FhnConfigError(f"JSON 文件根节点必须是对象（字典），当前类型：{type(data)}")
    return data


def coerce_config_value(key: str, raw: Any) -> Any:
    """把配置值转换为 CONFIG_KEYS 声明的类型"""
    if key not in CONFIG_KEYS:
        raise FhnConfigError(f"未知配置键：{key}，支持的键：{list(CONFIG_KEYS)}")
    kind = CONFIG_KEYS[key]
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        if kind == "int_list":
            items = raw if isinstance(raw, (list, tuple)) else [s for s in str(raw).split(",") if s.strip()]
            return [coerce_config_value("N", item) for item in items]
    except (TypeError, ValueError) as e:
        raise FhnConfigError(f"配置键 {key} 的值无效：{raw!r}") from e
    value = str(raw).strip()
    if key == "format" and value not in ("csv", "json"):
        raise FhnConfigError(f"配置键 format 只能是 csv 或 json，当前值：{value}")
    return value


def load_profile_config(
        config_file: str = "fhn_config.json",
        profile_key: str = "currentProfile",
        profile: Optional[str] = None,
        encoding: str = "utf-8"
) -> Dict[str, Any]:
    """
    读取 config/ 下的多配置档 JSON，返回选中的配置档
    :param profile: 显式指定的配置档名；None 时使用 profile_key 指向的默认配置档
    """
    all_config = read_json_file(CONFIG_DIR / config_file, encoding)
    current = profile or all_config.get(profile_key)
    profiles = [k for k in all_config if k != profile_key]
    if current not in profiles:
        raise FhnConfigError(f"配置档 {current} 不存在！配置文件中包含的配置档：{profiles}")
    return {key: coerce_config_value(key, value) for key, value in all_config[current].items()}


def read_kv_config(path: Union[str, Path], encoding: str = "utf-8") -> Dict[str, Any]:
    """
    平铺 key=value 配置文件；# 开头为注释，空行忽略，未知键报错
    """
    path = Path(path)
    if not path.is_file():
        raise FhnConfigError(f"配置文件不存在：{path}")
    result: Dict[str, Any] = {}
    for lineno, line in enumerate(path.read_text(encoding=encoding).splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise FhnConfigError(f"{path}:{lineno} 缺少 '='：{line!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        try:
            result[key] = coerce_config_value(key, raw)
        except FhnConfigError as e:
            raise FhnConfigError(f"{path}:{lineno} {e}") from e
    return result


def merge_config(*layers: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """按顺序叠加配置层，后者覆盖前者；值为 None 的键不覆盖"""
    merged: Dict[str, Any] = {}
    for layer in layers:
        for key, value in (layer or {}).items():
            if value is not None:
                merged[key] = value
    return merged
