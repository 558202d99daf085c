"""
- FitzHugh-Nagumo 模型定义：参数、状态、三次非线性项及其导数、右端函数
- 模型：mu*dv/dt = f(v,a) - w + I，dw/dt = v - gamma*w，f(v,a) = v(a-v)(v-1)
"""
import math
import numbers
from dataclasses import dataclass, replace
from typing import List, Tuple

from core.exceptions import InvalidParameters
from core.log_config import get_logger

# 使用封装的 get_logger
logger = get_logger(__name__)

# 基准参数
BASELINE_A = 0.22
BASELINE_GAMMA = 1.18
BASELINE_MU = 0.008
BASELINE_IC = (0.0, -0.2)


def _require_finite(owner: str, **values: float) -> None:
    for name, value in values.items():
        if not isinstance(value, numbers.Real) or not math.isfinite(value):
            raise InvalidParameters(f"{owner}.{name} 必须是有限实数，当前值：{value!r}")


@dataclass(frozen=True)
class FhnParams:
    """模型常数 (a, gamma, mu, I)"""
    a: float
    gamma: float
    mu: float
    current: float = 0.0

    def __post_init__(self):
        _require_finite("FhnParams", a=self.a, gamma=self.gamma, mu=self.mu, current=self.current)
        if not 0.0 < self.a < 1.0:
            raise InvalidParameters(f"FhnParams.a 必须满足 0<a<1，当前值：{self.a}")
        if self.gamma <= 0.0:
            raise InvalidParameters(f"FhnParams.gamma 必须为正，当前值：{self.gamma}")
        if self.mu <= 0.0:
            raise InvalidParameters(f"FhnParams.mu 必须为正，当前值：{self.mu}")

    @classmethod
    def baseline(cls, current: float = 0.0) -> "FhnParams":
        """基准参数 a=0.22, gamma=1.18, mu=0.008"""
        return cls(a=BASELINE_A, gamma=BASELINE_GAMMA, mu=BASELINE_MU, current=current)

    def with_current(self, current: float) -> "FhnParams":
        return replace(self, current=current)

    def as_dict(self) -> dict:
        return {"a": self.a, "gamma": self.gamma, "mu": self.mu, "I": self.current}


@dataclass(frozen=True)
class State:
    """(v, w)：膜电位与恢复变量"""
    v: float
    w: float

    def __post_init__(self):
        _require_finite("State", v=self.v, w=self.w)

    @classmethod
    def baseline(cls) -> "State":
        return cls(*BASELINE_IC)

    def as_tuple(self) -> Tuple[float, float]:
        return self.v, self.w


@dataclass(frozen=True)
class Derivative:
    """(dv/dt, dw/dt)"""
    dv: float
    dw: float

    def __post_init__(self):
        _require_finite("Derivative", dv=self.dv, dw=self.dw)

    def max_abs(self) -> float:
        return max(abs(self.dv), abs(self.dw))


def cubic(v: float, a: float) -> float:
    """f(v,a) = v(a-v)(v-1) = -v^3 + (1+a)v^2 - a*v，按 Horner 形式求值"""
    return ((-v + (1.0 + a)) * v - a) * v


def cubic_derivative(v: float, a: float) -> float:
    """f'(v,a) = -3v^2 + 2(1+a)v - a"""
    return (-3.0 * v + 2.0 * (1.0 + a)) * v - a


def rhs_components(v: float, w: float, p: FhnParams) -> Tuple[float, float]:
    """右端函数的纯浮点版本（供积分内循环使用，不构造值对象）"""
    return (cubic(v, p.a) - w + p.current) / p.mu, v - p.gamma * w


def rhs(s: State, p: FhnParams) -> Derivative:
    dv, dw = rhs_components(s.v, s.w, p)
    return Derivative(dv=dv, dw=dw)


# ==================== 零倾线与 I=0 的解析平衡点 ====================
def nullcline_v(v: float, p: FhnParams) -> float:
    """v-零倾线：w = f(v,a) + I"""
    return cubic(v, p.a) + p.current


def nullcline_w(v: float, p: FhnParams) -> float:
    """w-零倾线：w = v / gamma"""
    return v / p.gamma


def rest_state_roots(p: FhnParams) -> List[float]:
    """
    I=0 时平衡点的解析解：v=0 以及 (a+1)/2 ± sqrt((1-a)^2 - 4/gamma)/2
    仅当 gamma(1-a)^2 >= 4 时后两个根为实根；与 p.current 无关
    """
    roots = [0.0]
    disc = (1.0 - p.a) ** 2 - 4.0 / p.gamma
    if p.gamma * (1.0 - p.a) ** 2 >= 4.0 and disc >= 0.0:
        half = math.sqrt(disc) / 2.0
        centre = (p.a + 1.0) / 2.0
        roots.extend([centre - half, centre + half])
    else:
        logger.debug(f"📊 【解析平衡点】gamma(1-a)^2={p.gamma * (1.0 - p.a) ** 2:.6f} < 4，只有静息态 (0,0)")
    return sorted(roots)
