"""
- 显式前向差分格式：
    w_{k+1} = (1 - gamma*tau) w_k + tau v_k
    v_{k+1} = v_k + tau/mu [v_k(a-v_k)(v_k-1) - w_k + I]
  两个新值都由旧状态计算（Jacobi 式同步更新）
- 网格函数 L2 范数与稳定性估计校验
"""
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from core.exceptions import Diverged, SchemeOverflow
from core.fhn_model import FhnParams, State, cubic
from core.log_config import get_logger

# 使用封装的 get_logger
logger = get_logger(__name__)

EPS = float(np.finfo(float).eps)
FORCING_CLAIM = 13.0 / 15.0   # max|f - w| = 2/3 + 1/5


@dataclass(frozen=True)
class EulerConfig:
    """步长 tau、步数 steps、初值 ic；horizon = tau * steps"""
    tau: float
    steps: int
    ic: State
    horizon: Optional[float] = None

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"EulerConfig.tau 必须为正，当前值：{self.tau}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"EulerConfig.steps 必须是 >=1 的整数，当前值：{self.steps}")
        if self.horizon is None:
            object.__setattr__(self, "horizon", self.tau * self.steps)
        elif abs(self.tau * self.steps - self.horizon) > 1e-9 * max(1.0, abs(self.horizon)):
            raise ValueError(f"EulerConfig 不一致：tau*steps={self.tau * self.steps} != horizon={self.horizon}")

    @classmethod
    def from_horizon(cls, tau: float, horizon: float, ic: State) -> "EulerConfig":
        steps = int(round(horizon / tau))
        return cls(tau=tau, steps=steps, ic=ic, horizon=horizon)


@dataclass(frozen=True)
class EulerTrajectory:
    config: EulerConfig
    v_seq: np.ndarray
    w_seq: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.config.tau * np.arange(self.config.steps + 1)

    @property
    def terminal(self) -> State:
        return State(float(self.v_seq[-1]), float(self.w_seq[-1]))


@dataclass(frozen=True)
class StabilityCheck:
    k: int
    lhs: float
    rhs: float
    satisfied: bool
    estimate: str = "v_bound"


def _advance(v: float, w: float, p: FhnParams, tau: float) -> Tuple[float, float]:
    w_next = (1.0 - p.gamma * tau) * w + tau * v
    v_next = v + (tau / p.mu) * (cubic(v, p.a) - w + p.current)
    return v_next, w_next


def euler_step(s: State, p: FhnParams, tau: float) -> State:
    if tau < 0:
        raise ValueError(f"euler_step 步长不能为负，当前值：{tau}")
    v_next, w_next = _advance(s.v, s.w, p, tau)
    if not (math.isfinite(v_next) and math.isfinite(w_next)):
        raise SchemeOverflow(f"显式格式溢出：tau={tau} 对当前状态 ({s.v}, {s.w}) 过大")
    return State(v_next, w_next)


def simulate(p: FhnParams, cfg: EulerConfig) -> EulerTrajectory:
    """从 cfg.ic 出发迭代 cfg.steps 步；结果逐位可复现"""
    start = time.perf_counter()
    logger.debug(f"🚀 【欧拉推进】tau={cfg.tau}，steps={cfg.steps}，I={p.current}，ic=({cfg.ic.v}, {cfg.ic.w})")
    v, w = cfg.ic.v, cfg.ic.w
    v_seq = [v]
    w_seq = [w]
    for k in range(1, cfg.steps + 1):
        v, w = _advance(v, w, p, cfg.tau)
        if not (math.isfinite(v) and math.isfinite(w)):
            logger.error(f"❌ 【欧拉推进】第 {k} 步出现非有限值，tau={cfg.tau}，mu={p.mu}")
            raise Diverged(k, method="euler", t=k * cfg.tau)
        v_seq.append(v)
        w_seq.append(w)
    logger.debug(f"🏁 【欧拉推进】完成，终值=({v:.6f}, {w:.6f})，耗时={time.perf_counter() - start:.3f}s")
    return EulerTrajectory(config=cfg, v_seq=np.array(v_seq), w_seq=np.array(w_seq))


def grid_norm(seq, tau: float) -> float:
    """||phi||_{2tau} = (sum |phi_k|^2 tau)^{1/2}"""
    arr = np.asarray(seq, dtype=float)
    if arr.size == 0:
        raise ValueError("grid_norm 需要非空序列")
    return float(np.sqrt(np.sum(arr * arr) * tau))


def check_stability_bounds(traj: EulerTrajectory, p: FhnParams) -> List[StabilityCheck]:
    """
    逐步校验稳定性估计（范数取标量迭代值的绝对值）：
      v_bound:            |v_k| <= |v_0| + tau/mu (sum_{j=1..k} |f_{j-1} - w_{j-1}| + k|I|)
      w_bound:            |w_k| <= max(1, |w_0|) + tau sum_{j=0..k-1} |v_j|
      v_bound_simplified: |v_k| <= 13 tau/(15 mu) + k|I|   （仅供参考）
    前两项含 4kε 的相对舍入余量
    """
    v = np.asarray(traj.v_seq, dtype=float)
    w = np.asarray(traj.w_seq, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise ValueError("check_stability_bounds 需要有限的轨迹")
    tau = traj.config.tau
    n = len(v) - 1
    k = np.arange(1, n + 1)
    abs_i = abs(p.current)

    forcing = np.abs(cubic(v[:-1], p.a) - w[:-1])
    rhs_v = abs(v[0]) + (tau / p.mu) * (np.cumsum(forcing) + k * abs_i)
    rhs_v = rhs_v * (1.0 + 4.0 * k * EPS)
    rhs_w = max(1.0, abs(w[0])) + tau * np.cumsum(np.abs(v[:-1]))
    rhs_w = rhs_w * (1.0 + 4.0 * k * EPS)
    rhs_s = FORCING_CLAIM * tau / p.mu + k * abs_i

    lhs_v = np.abs(v[1:])
    lhs_w = np.abs(w[1:])
    checks: List[StabilityCheck] = []
    for estimate, lhs, rhs in (("v_bound", lhs_v, rhs_v), ("w_bound", lhs_w, rhs_w),
                               ("v_bound_simplified", lhs_v, rhs_s)):
        ok = lhs <= rhs
        checks.extend(StabilityCheck(int(kk), float(l), float(r), bool(s), estimate)
                      for kk, l, r, s in zip(k, lhs, rhs, ok))
        failed = int(np.count_nonzero(~ok))
        if failed:
            logger.warning(f"⚠️ 【稳定性估计】{estimate} 有 {failed}/{n} 步不满足")
    return checks


def forcing_extreme(traj: EulerTrajectory, p: FhnParams) -> StabilityCheck:
    """max_j |f_j - w_j| 与 13/15 的比较（信息性检查）"""
    v = np.asarray(traj.v_seq[:-1], dtype=float)
    w = np.asarray(traj.w_seq[:-1], dtype=float)
    forcing = np.abs(cubic(v, p.a) - w)
    k = int(np.argmax(forcing))
    value = float(forcing[k])
    return StabilityCheck(k=k, lhs=value, rhs=FORCING_CLAIM, satisfied=value <= FORCING_CLAIM,
                          estimate="forcing_claim")
