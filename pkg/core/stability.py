"""
- 平衡点求解、线性化、特征值、稳定性分类
- Hopf 分岔检测（按 I 扫描 Tr(M) 并二分求根）、分岔图数据、零倾线数据
"""
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import repeat
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from core import fdm, reference
from core.exceptions import EmptyBracket, FhnNumericalError, InvalidInterval, MultiRootAtEquilibriumSwitch
from core.fhn_model import FhnParams, State, cubic_derivative, nullcline_v, nullcline_w, rest_state_roots
from core.log_config import get_logger

# 使用封装的 get_logger
logger = get_logger(__name__)

CLASSIFY_TOL = 1e-8           # Marginal 判定：|Tr| <= 1e-8
ROOT_MERGE_TOL = 1e-7         # 重根合并距离
REAL_ROOT_IMAG_TOL = 1e-6     # 伴随矩阵特征值虚部小于该值（相对）视为实根
HOPF_TRACE_TOL = 1e-10
HOPF_SCAN_POINTS = 1000
REST_STATE_TOL = 1e-9         # I=0 解析平衡点对照容差


class StabilityClass(str, Enum):
    """平衡点稳定性类型"""
    STABLE_NODE = "StableNode"
    STABLE_SPIRAL = "StableSpiral"
    UNSTABLE_NODE = "UnstableNode"
    UNSTABLE_SPIRAL = "UnstableSpiral"
    SADDLE = "Saddle"
    MARGINAL = "Marginal"

    @property
    def is_stable(self) -> bool:
        return self in (StabilityClass.STABLE_NODE, StabilityClass.STABLE_SPIRAL)


@dataclass(frozen=True)
class Jacobian2:
    """2x2 线性化矩阵 [[m11, m12], [m21, m22]]"""
    m11: float
    m12: float
    m21: float
    m22: float

    @property
    def trace(self) -> float:
        return self.m11 + self.m22

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21

    @property
    def discriminant(self) -> float:
        return self.trace ** 2 - 4.0 * self.det

    def as_array(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])


@dataclass(frozen=True)
class EigenPair:
    """特征值对，lambda1 对应 +sqrt 分支"""
    lambda1: complex
    lambda2: complex

    @property
    def trace(self) -> float:
        return (self.lambda1 + self.lambda2).real

    @property
    def det(self) -> float:
        return (self.lambda1 * self.lambda2).real

    @property
    def max_real(self) -> float:
        return max(self.lambda1.real, self.lambda2.real)


@dataclass(frozen=True)
class EquilibriumReport:
    v_star: float
    w_star: float
    jacobian: Jacobian2
    eigen: EigenPair
    stability: StabilityClass
    multiplicity: int = 1

    @property
    def stable(self) -> bool:
        return self.stability.is_stable


@dataclass(frozen=True)
class HopfPoint:
    i_crit: float
    omega_imag: float
    v_star: float


@dataclass(frozen=True)
class BranchPoint:
    """分岔图上的一个点；极限环极值只在不稳定点给出"""
    current: float
    v_star: float
    stable: bool
    eigen: EigenPair
    lc_min: Optional[float] = None
    lc_max: Optional[float] = None
    degenerate: bool = False

    def __post_init__(self):
        if (self.lc_min is None) != (self.lc_max is None):
            raise ValueError("lc_min / lc_max 必须同时给出或同时缺省")
        if self.lc_min is not None and self.lc_min > self.lc_max:
            raise ValueError(f"lc_min={self.lc_min} 大于 lc_max={self.lc_max}")


@dataclass(frozen=True)
class ScanSimConfig:
    """分岔扫描中极限环幅值的积分设置"""
    method: str = "euler"          # euler | reference
    tau: float = 1e-5
    horizon: float = 5.0
    discard: float = 0.5           # 丢弃前 50% 的暂态
    ic: State = field(default_factory=State.baseline)
    workers: int = 1

    def __post_init__(self):
        if self.method not in ("euler", "reference"):
            raise ValueError(f"ScanSimConfig.method 只支持 euler/reference，当前值：{self.method}")
        if self.tau <= 0 or self.horizon <= 0 or not 0.0 <= self.discard < 1.0:
            raise ValueError(f"ScanSimConfig 参数非法：tau={self.tau}, horizon={self.horizon}, discard={self.discard}")


class Nullclines(NamedTuple):
    v_nullcline: np.ndarray   # shape (n, 2)：(v, f(v,a)+I)
    w_nullcline: np.ndarray   # shape (n, 2)：(v, v/gamma)


# ==================== 平衡点 ====================
def _equilibrium_residual(v: float, p: FhnParams) -> float:
    return nullcline_v(v, p) - nullcline_w(v, p)


def _polish_root(v: float, p: FhnParams, max_iter: int = 50) -> float:
    """牛顿修正：f(v,a) - v/gamma + I = 0，残差到 1e-12 以下"""
    for _ in range(max_iter):
        g = _equilibrium_residual(v, p)
        if abs(g) <= 1e-15:
            break
        dg = cubic_derivative(v, p.a) - 1.0 / p.gamma
        if dg == 0.0:
            break
        step = g / dg
        v_next = v - step
        if abs(_equilibrium_residual(v_next, p)) >= abs(g):
            break
        v = v_next
    return v


def _real_equilibrium_roots(p: FhnParams) -> List[Tuple[float, int]]:
    """伴随矩阵求根 + 牛顿修正 + 近重根合并，返回 [(v*, 重数)]，按 v* 升序"""
    coeffs = [-1.0, 1.0 + p.a, -(p.a + 1.0 / p.gamma), p.current]
    raw = np.roots(coeffs)
    real = [r.real for r in raw if abs(r.imag) <= REAL_ROOT_IMAG_TOL * max(1.0, abs(r))]
    if not real:
        # 实系数三次方程必有实根，数值上取虚部最小者
        real = [min(raw, key=lambda r: abs(r.imag)).real]
    polished = sorted(_polish_root(float(r), p) for r in real)

    merged: List[Tuple[float, int]] = []
    for v in polished:
        if merged and abs(v - merged[-1][0]) < ROOT_MERGE_TOL:
            v_prev, mult = merged[-1]
            merged[-1] = ((v_prev * mult + v) / (mult + 1), mult + 1)
        else:
            merged.append((v, 1))
    return merged


def jacobian_at(p: FhnParams, v_star: float) -> Jacobian2:
    """M = [[f'(v*,a)/mu, -1/mu], [1, -gamma]]"""
    return Jacobian2(
        m11=cubic_derivative(v_star, p.a) / p.mu,
        m12=-1.0 / p.mu,
        m21=1.0,
        m22=-p.gamma,
    )


def eigenvalues(m: Jacobian2) -> EigenPair:
    """lambda = (Tr ± sqrt(Tr^2 - 4Det)) / 2，判别式为负时取复数平方根"""
    tr = m.trace
    det = m.det
    disc = tr * tr - 4.0 * det
    if disc < 0.0:
        half_imag = math.sqrt(-disc) / 2.0
        return EigenPair(complex(tr / 2.0, half_imag), complex(tr / 2.0, -half_imag))
    sq = math.sqrt(disc)
    # 避免相消：先算绝对值大的根，再由 Vieta 得另一根
    q = (tr + math.copysign(sq, tr)) / 2.0
    if q == 0.0:
        return EigenPair(complex(0.0, 0.0), complex(0.0, 0.0))
    r1, r2 = q, det / q
    return EigenPair(complex(max(r1, r2), 0.0), complex(min(r1, r2), 0.0))


def classify(e: EigenPair, tol: float = CLASSIFY_TOL) -> StabilityClass:
    if tol <= 0:
        raise ValueError(f"classify 容差必须为正，当前值：{tol}")
    tr = e.trace
    det = e.det
    disc = ((e.lambda1 - e.lambda2) ** 2).real
    if det < 0.0:
        return StabilityClass.SADDLE
    if abs(tr) <= tol and det > 0.0:
        return StabilityClass.MARGINAL
    if tr < 0.0:
        return StabilityClass.STABLE_SPIRAL if disc < 0.0 else StabilityClass.STABLE_NODE
    return StabilityClass.UNSTABLE_SPIRAL if disc < 0.0 else StabilityClass.UNSTABLE_NODE


def _report(p: FhnParams, v_star: float, multiplicity: int = 1) -> EquilibriumReport:
    jac = jacobian_at(p, v_star)
    eig = eigenvalues(jac)
    return EquilibriumReport(
        v_star=v_star,
        w_star=v_star / p.gamma,
        jacobian=jac,
        eigen=eig,
        stability=classify(eig),
        multiplicity=multiplicity,
    )


def _check_rest_states(p: FhnParams, reports: Sequence[EquilibriumReport]) -> None:
    """I=0 时与解析解对照，不一致只记录告警"""
    expected = rest_state_roots(p)
    found = [r.v_star for r in reports for _ in range(r.multiplicity)]
    if len(found) != len(expected) or any(abs(x - y) > REST_STATE_TOL for x, y in zip(found, expected)):
        logger.warning(f"⚠️ 【平衡点】I=0 的数值根 {found} 与解析解 {expected} 不一致")


def find_equilibria(p: FhnParams) -> List[EquilibriumReport]:
    """f(v*,a) - v*/gamma + I = 0 的全部实根，附带雅可比、特征值与分类"""
    reports = [_report(p, v, mult) for v, mult in _real_equilibrium_roots(p)]
    if p.current == 0.0:
        _check_rest_states(p, reports)
    logger.debug(f"📊 【平衡点】I={p.current}，个数={len(reports)}，"
                 f"v*={[round(r.v_star, 6) for r in reports]}，类型={[r.stability.value for r in reports]}")
    return reports


def equilibrium_spectra(p_base: FhnParams, currents: Sequence[float]) -> List[Tuple[float, EquilibriumReport]]:
    """不同 I 下平衡点的特征值谱"""
    out = []
    for current in currents:
        for report in find_equilibria(p_base.with_current(float(current))):
            out.append((float(current), report))
    return out


# ==================== Hopf 分岔 ====================
def _branch_traces(p_base: FhnParams, current: float) -> List[float]:
    return [jacobian_at(p_base, v).trace for v, _ in _real_equilibrium_roots(p_base.with_current(current))]


def _sign_change(t_a: float, t_b: float) -> bool:
    return (t_a < 0.0 < t_b) or (t_b < 0.0 < t_a) or (t_b == 0.0 and t_a != 0.0)


def _bisect_hopf(p_base: FhnParams, branch: int, count: int, i_a: float, i_b: float) -> float:
    def trace_of_branch(current: float) -> float:
        traces = _branch_traces(p_base, current)
        if len(traces) != count:
            raise MultiRootAtEquilibriumSwitch(i_a, i_b, (count, len(traces)))
        return traces[branch]

    t_b = trace_of_branch(i_b)
    if t_b == 0.0:
        return i_b
    return brentq(trace_of_branch, i_a, i_b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_hopf(p_base: FhnParams, i_lo: float, i_hi: float, n_grid: int = HOPF_SCAN_POINTS) -> List[HopfPoint]:
    """
    在 [i_lo, i_hi] 上均匀扫描 Tr(M(I))，对每个变号区间二分到 |Tr| <= 1e-10
    只保留 Det > 0 的穿越点，omega_imag = sqrt(Det)
    """
    if not i_lo < i_hi:
        raise InvalidInterval(f"find_hopf 要求 i_lo < i_hi，当前：[{i_lo}, {i_hi}]")
    start = time.perf_counter()
    grid = np.linspace(i_lo, i_hi, n_grid)
    traces = [_branch_traces(p_base, float(current)) for current in grid]

    crossings: List[Tuple[float, int]] = []
    for k in range(len(grid) - 1):
        t_a, t_b = traces[k], traces[k + 1]
        if len(t_a) != len(t_b):
            # 平衡点个数在格点间变化：外侧分支的迹变号则无法确定归属
            if _sign_change(t_a[0], t_b[0]) or _sign_change(t_a[-1], t_b[-1]):
                raise MultiRootAtEquilibriumSwitch(float(grid[k]), float(grid[k + 1]), (len(t_a), len(t_b)))
            continue
        for branch in range(len(t_a)):
            if _sign_change(t_a[branch], t_b[branch]):
                i_crit = _bisect_hopf(p_base, branch, len(t_a), float(grid[k]), float(grid[k + 1]))
                crossings.append((i_crit, branch))
    if not crossings:
        raise EmptyBracket(i_lo, i_hi)

    points: List[HopfPoint] = []
    for i_crit, branch in crossings:
        p = p_base.with_current(i_crit)
        v_star = _real_equilibrium_roots(p)[branch][0]
        jac = jacobian_at(p, v_star)
        if abs(jac.trace) > HOPF_TRACE_TOL:
            logger.warning(f"⚠️ 【Hopf 扫描】I={i_crit} 处 |Tr|={abs(jac.trace):.3e} 未达到 {HOPF_TRACE_TOL}")
        if jac.det > 0.0:
            points.append(HopfPoint(i_crit=i_crit, omega_imag=math.sqrt(jac.det), v_star=v_star))
        else:
            logger.debug(f"📊 【Hopf 扫描】I={i_crit} 处 Det<=0，迹过零但不是 Hopf 点")
    logger.info(f"🏁 【Hopf 扫描】区间=[{i_lo}, {i_hi}]，格点={n_grid}，Hopf 点="
                f"{[round(h.i_crit, 6) for h in points]}，耗时={time.perf_counter() - start:.3f}s")
    return points


# ==================== 分岔图 ====================
def _limit_cycle_extrema(p: FhnParams, cfg: ScanSimConfig) -> Tuple[float, float]:
    """积分后丢弃暂态，返回 v 的 (min, max)"""
    if cfg.method == "euler":
        steps = int(round(cfg.horizon / cfg.tau))
        traj = fdm.simulate(p, fdm.EulerConfig(tau=cfg.tau, steps=steps, ic=cfg.ic))
        tail = traj.v_seq[int(cfg.discard * steps):]
    else:
        n_samples = int(round((1.0 - cfg.discard) * cfg.horizon / cfg.tau)) + 1
        times = np.linspace(cfg.discard * cfg.horizon, cfg.horizon, n_samples)
        tail = reference.reference_solve(p, cfg.ic, cfg.horizon, times).v
    return float(np.min(tail)), float(np.max(tail))


def _scan_point(p_base: FhnParams, current: float, cfg: ScanSimConfig) -> List[BranchPoint]:
    p = p_base.with_current(current)
    reports = find_equilibria(p)
    # 只有不稳定结点/焦点（Det>0, Tr>0）周围才可能存在极限环
    needs_cycle = any(r.jacobian.det > 0.0 and r.jacobian.trace > CLASSIFY_TOL for r in reports)
    lc: Optional[Tuple[float, float]] = None
    degenerate = False
    if needs_cycle:
        try:
            lc = _limit_cycle_extrema(p, cfg)
        except FhnNumericalError as e:
            degenerate = True
            logger.warning(f"⚠️ 【分岔扫描】I={current} 积分失败，标记为退化点：{e}")

    points = []
    for r in reports:
        with_cycle = lc is not None and not r.stable and r.stability is not StabilityClass.SADDLE
        points.append(BranchPoint(
            current=current,
            v_star=r.v_star,
            stable=r.stable,
            eigen=r.eigen,
            lc_min=lc[0] if with_cycle else None,
            lc_max=lc[1] if with_cycle else None,
            degenerate=degenerate and not r.stable,
        ))
    return points


def bifurcation_scan(p_base: FhnParams, i_grid: Sequence[float],
                     sim_cfg: Optional[ScanSimConfig] = None) -> List[BranchPoint]:
    """逐个 I 计算平衡分支与稳定性；不稳定处积分得到极限环幅值。输出顺序与 i_grid 一致"""
    if len(i_grid) == 0:
        raise ValueError("bifurcation_scan 需要非空的 i_grid")
    if any(b < a for a, b in zip(i_grid, i_grid[1:])):
        raise ValueError("bifurcation_scan 要求 i_grid 升序")
    cfg = sim_cfg or ScanSimConfig()
    grid = [float(i) for i in i_grid]
    start = time.perf_counter()
    logger.info(f"🚀 【分岔扫描】格点数={len(grid)}，积分方式={cfg.method}，并行={cfg.workers}")

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_point = list(pool.map(_scan_point, repeat(p_base), grid, repeat(cfg)))
    else:
        per_point = [_scan_point(p_base, current, cfg) for current in grid]

    result = [bp for points in per_point for bp in points]
    logger.info(f"🏁 【分岔扫描】完成，分支点={len(result)}，耗时={time.perf_counter() - start:.3f}s")
    return result


def nullclines(p: FhnParams, v_grid: Sequence[float]) -> Nullclines:
    """v-零倾线 w = f(v,a)+I；w-零倾线 w = v/gamma"""
    v = np.asarray(v_grid, dtype=float)
    if v.size == 0:
        raise ValueError("nullclines 需要非空的 v_grid")
    w_v = nullcline_v(v, p)
    w_w = nullcline_w(v, p)
    return Nullclines(np.column_stack([v, w_v]), np.column_stack([v, w_w]))
