import json
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from core.data_utils import format_python_to_json
from core.log_config import get_logger

# 使用封装的 get_logger
logger = get_logger(__name__)


class NumericAssertor:
    """
    数值结果断言工具类（pytest 原生 assert，链式调用）
    subject 可以是标量、数组、dataclass 或字典；各断言方法的 field 参数按点分路径取值，
    例如 "eigen.lambda1.imag"、"0.v_star"（列表下标）
    """

    def __init__(self, subject: Any, label: str = ""):
        self.subject = subject
        self.label = label or type(subject).__name__
        self._assertion_map: Dict[str, Callable] = {
            "close": self.assert_close,
            "less_equal": self.assert_less_equal,
            "all_finite": self.assert_all_finite,
            "strictly_decreasing": self.assert_strictly_decreasing,
            "in_range": self.assert_in_range,
            "length": self.assert_length,
            "equal": self.assert_equal,
        }

    @property
    def supported_types(self) -> List[str]:
        return list(self._assertion_map)

    def extract(self, field: Optional[str] = None) -> Any:
        """按点分路径从 subject 取值；数字段作为下标"""
        value = self.subject
        if not field:
            return value
        for part in field.split("."):
            if isinstance(value, dict):
                value = value[part]
            elif part.lstrip("-").isdigit():
                value = value[int(part)]
            else:
                value = getattr(value, part)
        return value

    def _format_assert_msg(self, assert_type: str, expected: Any, actual: Any, msg: str = "") -> str:
        """格式化断言失败信息（清晰展示预期/实际值）"""
        def show(value: Any) -> str:
            try:
                return format_python_to_json(value, indent=2) if isinstance(value, (list, dict, np.ndarray)) \
                    else str(value)
            except TypeError:
                return repr(value)

        base_msg = (
            f"\n===== 断言失败 [{self.label}] =====\n"
            f"断言类型：{assert_type}\n"
            f"预期值：{show(expected)}\n"
            f"实际值：{show(actual)}\n"
        )
        if msg:
            base_msg += f"附加说明：{msg}\n"
        return base_msg

    # ========== 数值断言 ==========
    def assert_close(self, expected: Any, abs_tol: float = 0.0, rel_tol: float = 1e-12,
                     field: Optional[str] = None, msg: str = "") -> "NumericAssertor":
        """|actual - expected| <= abs_tol + rel_tol*|expected|（逐元素）"""
        actual = np.asarray(self.extract(field), dtype=complex if np.iscomplexobj(expected) else float)
        exp = np.asarray(expected)
        gap = np.abs(actual - exp)
        allowed = abs_tol + rel_tol * np.abs(exp)
        assert actual.shape == exp.shape or exp.ndim == 0, self._format_assert_msg(
            f"形状[{field or '-'}]", exp.shape, actual.shape, msg)
        assert np.all(gap <= allowed), self._format_assert_msg(
            assert_type=f"数值接近[{field or '-'}]",
            expected=f"{expected}（abs_tol={abs_tol}，rel_tol={rel_tol}）",
            actual=f"{actual.tolist()}（最大偏差 {float(np.max(gap)):.3e}）",
            msg=msg,
        )
        return self

    def assert_equal(self, expected: Any, field: Optional[str] = None, msg: str = "") -> "NumericAssertor":
        actual = self.extract(field)
        assert actual == expected, self._format_assert_msg(f"相等[{field or '-'}]", expected, actual, msg)
        return self

    def assert_less_equal(self, upper: Any, field: Optional[str] = None, msg: str = "") -> "NumericAssertor":
        """actual <= upper（逐元素）"""
        actual = np.asarray(self.extract(field), dtype=float)
        assert np.all(actual <= np.asarray(upper, dtype=float)), self._format_assert_msg(
            assert_type=f"不超过上界[{field or '-'}]",
            expected=f"≤ {upper}",
            actual=actual.tolist(),
            msg=msg,
        )
        return self

    def assert_in_range(self, lo: float, hi: float, field: Optional[str] = None, msg: str = "") -> "NumericAssertor":
        actual = np.asarray(self.extract(field), dtype=float)
        assert np.all((actual >= lo) & (actual <= hi)), self._format_assert_msg(
            assert_type=f"区间[{field or '-'}]",
            expected=f"[{lo}, {hi}]",
            actual=actual.tolist(),
            msg=msg,
        )
        return self

    def assert_all_finite(self, field: Optional[str] = None, msg: str = "") -> "NumericAssertor":
        actual = np.asarray(self.extract(field), dtype=float)
        assert np.all(np.isfinite(actual)), self._format_assert_msg(
            assert_type=f"全部有限[{field or '-'}]",
            expected="无 NaN / Inf",
            actual=f"{int(np.count_nonzero(~np.isfinite(actual)))} 个非有限值",
            msg=msg,
        )
        return self

    def assert_strictly_decreasing(self, field: Optional[str] = None, msg: str = "") -> "NumericAssertor":
        actual = np.asarray(self.extract(field), dtype=float)
        assert np.all(np.diff(actual) < 0), self._format_assert_msg(
            assert_type=f"严格递减[{field or '-'}]",
            expected="后一项 < 前一项",
            actual=actual.tolist(),
            msg=msg,
        )
        return self

    def assert_length(self, expected: int, field: Optional[str] = None, msg: str = "") -> "NumericAssertor":
        actual = len(self.extract(field))
        assert actual == expected, self._format_assert_msg(f"长度[{field or '-'}]", expected, actual, msg)
        return self

    # ========== 自定义规则断言 ==========
    def assert_business_rule(self, rule_func: Callable[..., bool], rule_desc: str, msg: str = "",
                             **kwargs) -> "NumericAssertor":
        """rule_func(subject, **kwargs) 返回 True 视为通过；执行异常视为失败"""
        try:
            rule_result = rule_func(self.subject, **kwargs)
        except Exception as e:
            raise AssertionError(self._format_assert_msg(
                assert_type=f"自定义规则执行异常[{rule_desc}]",
                expected="规则函数执行无异常且返回True",
                actual=f"规则函数执行报错：{str(e)[:500]}",
                msg=msg,
            )) from e
        assert rule_result is True or rule_result is np.True_, self._format_assert_msg(
            assert_type=f"自定义规则[{rule_desc}]",
            expected="True（规则满足）",
            actual=rule_result,
            msg=f"{msg}\n规则函数入参：{kwargs}" if kwargs else msg,
        )
        logger.debug(f"✅ 【规则断言】[{self.label}] 规则[{rule_desc}]验证通过")
        return self

    # ========== 从配置列表执行批量链式断言 ==========
    def assert_from_config(self, assert_config: List[Dict[str, Any]]) -> "NumericAssertor":
        """
        assert_config 每项为 {"type": <断言类型>, ...对应方法的关键字参数}
        """
        if not isinstance(assert_config, list):
            raise TypeError(f"assert_config必须是列表类型，实际传入：{type(assert_config).__name__}")

        for idx, assert_item in enumerate(assert_config):
            if not isinstance(assert_item, dict):
                raise TypeError(f"assert_config第{idx}个元素必须是字典类型，实际传入：{type(assert_item).__name__}")
            if "type" not in assert_item:
                raise ValueError(
                    f"assert_config第{idx}个元素缺少必填的'type'字段，当前配置项：{json.dumps(assert_item, ensure_ascii=False)}"
                )
            kwargs = {k: v for k, v in assert_item.items() if k != "type"}
            assert_type = assert_item["type"]
            if assert_type not in self._assertion_map:
                raise ValueError(
                    f"assert_config第{idx}个元素的断言类型'{assert_type}'不支持！\n"
                    f"支持的断言类型：{self.supported_types}"
                )
            self._assertion_map[assert_type](**kwargs)
        return self
