"""
Pytest全局配置：放所有测试用例共用的Fixture
无需手动导入，tests/下的所有用例可直接使用
"""
import pytest

from core.assertion_utils import NumericAssertor
from core.fhn_model import FhnParams, State


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 参考解扫描等耗时较长的用例")


@pytest.fixture(scope="session")  # 会话级别复用
def baseline_params():
    """基准参数 a=0.22, gamma=1.18, mu=0.008, I=0"""
    return FhnParams.baseline()


@pytest.fixture(scope="session")
def baseline_ic():
    return State.baseline()


@pytest.fixture(scope="function")
def numeric_assert():
    """全局断言工具Fixture（入参为被测对象，返回断言实例）"""
    def _factory(subject, label: str = ""):
        return NumericAssertor(subject, label)
    return _factory


@pytest.fixture(scope="function")
def tmp_out(tmp_path):
    """单个用例独立的输出目录"""
    out = tmp_path / "out"
    out.mkdir()
    return out
