"""
- FHN 工具包统一异常定义
- 数值失败统一继承 FhnNumericalError（CLI 退出码 3），参数/配置错误继承 FhnConfigError（CLI 退出码 2）
"""
from typing import Optional, Sequence


class FhnError(Exception):
    """工具包异常基类"""


class FhnNumericalError(FhnError):
    """数值计算失败（求根、牛顿迭代、显式格式发散等）"""


class FhnConfigError(FhnError, ValueError):
    """参数或配置不合法"""


# ==================== 参数校验类 ====================
class InvalidParameters(FhnConfigError):
    """模型参数违反约束（0<a<1, gamma>0, mu>0, 数值有限）"""


class InvalidInterval(FhnConfigError):
    """区间端点不满足 d < e"""


class InvalidDegree(FhnConfigError):
    """多项式阶数越界（1 <= N <= MAX_DEGREE）"""


class NonpositiveBound(FhnConfigError):
    """误差界所需的导数上界必须为正"""


# ==================== 稳定性 / 分岔 ====================
class EmptyBracket(FhnNumericalError):
    """扫描区间内迹没有变号"""

    def __init__(self, i_lo: float, i_hi: float):
        self.i_lo = i_lo
        self.i_hi = i_hi
        super().__init__(f"区间 [{i_lo}, {i_hi}] 内 Tr(M) 无变号，无 Hopf 点")


class MultiRootAtEquilibriumSwitch(FhnNumericalError):
    """二分区间内平衡点个数发生变化，需要调用方缩小区间"""

    def __init__(self, i_lo: float, i_hi: float, counts: Sequence[int]):
        self.i_lo = i_lo
        self.i_hi = i_hi
        self.counts = tuple(counts)
        super().__init__(f"区间 [{i_lo}, {i_hi}] 内平衡点个数变化 {self.counts}，请缩小扫描区间")


# ==================== 配置法求解 ====================
class SingularJacobian(FhnNumericalError):
    """牛顿线性方程组奇异（系统行列式为零）"""

    def __init__(self, iteration: int, detail: str = ""):
        self.iteration = iteration
        super().__init__(f"第 {iteration} 次牛顿迭代雅可比矩阵奇异 {detail}".rstrip())


class NoConvergence(FhnNumericalError):
    """牛顿迭代未在 max_iter 内收敛，附带目前最优解"""

    def __init__(self, iterations: int, best_residual: float, best_x=None, reason: str = "达到最大迭代次数"):
        self.iterations = iterations
        self.best_residual = best_residual
        self.best_x = best_x
        super().__init__(f"牛顿迭代未收敛（{reason}）：iters={iterations}，最优残差={best_residual:.3e}")


class SubintervalFailure(FhnNumericalError):
    """分段求解中某个子区间失败"""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"第 {index} 个子区间求解失败：{cause}")


# ==================== 显式格式 ====================
class SchemeOverflow(FhnNumericalError):
    """单步推进出现非有限值"""


class Diverged(FhnNumericalError):
    """积分过程在第 k 步首次出现非有限值"""

    def __init__(self, k: int, method: str = "euler", t: Optional[float] = None):
        self.k = k
        self.method = method
        self.t = t
        where = f"，t={t:.6g}" if t is not None else ""
        super().__init__(f"{method} 积分在第 {k} 步发散{where}")
