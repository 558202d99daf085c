"""
- 参考解（误差基准）：定步长经典四阶 Runge-Kutta
- 步长 h = min(1e-5, mu/100)；在相邻采样时刻之间均分步长，保证积分恰好落在采样时刻
"""
import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from core.exceptions import Diverged
from core.fhn_model import FhnParams, State, rhs_components
from core.log_config import get_logger

# 使用封装的 get_logger
logger = get_logger(__name__)

MAX_REFERENCE_STEP = 1e-5


@dataclass(frozen=True)
class SampledTrajectory:
    """在采样时刻上的 (v, w)"""
    times: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, index: int) -> State:
        return State(float(self.v[index]), float(self.w[index]))


def default_step(p: FhnParams) -> float:
    return min(MAX_REFERENCE_STEP, p.mu / 100.0)


def _rk4(v: float, w: float, p: FhnParams, h: float):
    k1v, k1w = rhs_components(v, w, p)
    k2v, k2w = rhs_components(v + 0.5 * h * k1v, w + 0.5 * h * k1w, p)
    k3v, k3w = rhs_components(v + 0.5 * h * k2v, w + 0.5 * h * k2w, p)
    k4v, k4w = rhs_components(v + h * k3v, w + h * k3w, p)
    return (v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
            w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w))


def reference_solve(p: FhnParams, ic: State, horizon: float, sample_times: Sequence[float],
                    step: Optional[float] = None) -> SampledTrajectory:
    """
    高精度参考解
    :param sample_times: 升序采样时刻，位于 [0, horizon]
    :param step: 覆盖默认步长（步长减半自洽检查时使用）
    """
    if not horizon > 0:
        raise ValueError(f"reference_solve 要求 horizon > 0，当前值：{horizon}")
    times = np.asarray(sample_times, dtype=float)
    if times.size and (times[0] < 0.0 or times[-1] > horizon * (1.0 + 1e-12) or np.any(np.diff(times) < 0)):
        raise ValueError(f"采样时刻必须升序且位于 [0, {horizon}]")
    h = step or default_step(p)
    start = time.perf_counter()

    v, w = ic.v, ic.w
    t_prev = 0.0
    total_steps = 0
    v_out = np.empty(times.size)
    w_out = np.empty(times.size)
    for idx, t_sample in enumerate(times):
        span = float(t_sample) - t_prev
        if span > 0.0:
            n = max(1, math.ceil(span / h - 1e-9))
            hh = span / n
            for _ in range(n):
                v, w = _rk4(v, w, p, hh)
                total_steps += 1
            if not (math.isfinite(v) and math.isfinite(w)):
                logger.error(f"❌ 【参考解】t={t_sample} 之前出现非有限值")
                raise Diverged(total_steps, method="rk4", t=float(t_sample))
            t_prev = float(t_sample)
        v_out[idx] = v
        w_out[idx] = w

    logger.debug(f"🏁 【参考解】h={h:.3e}，总步数={total_steps}，采样点={times.size}，"
                 f"耗时={time.perf_counter() - start:.3f}s")
    return SampledTrajectory(times=times, v=v_out, w=w_out)
