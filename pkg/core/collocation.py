"""
- 截断 Taylor 多项式配置法
    v_N(t) = sum a_{1,n} (t-c)^n,  w_N(t) = sum a_{2,n} (t-c)^n
- 配置点 t_i = d + (e-d) i / N；在每个配置点写出两条 ODE 残差（按点交错排列），
  最后两行（t_N 处）替换为初值行，得到 2(N+1) 维非线性代数方程组，阻尼牛顿求解
- 三次项通过块对角矩阵 T̄ = diag(T,...,T)、T̿ = diag(T̄,...,T̄) 构造：
    [v^2] = T T̄ Ā,  [v^3] = T T̄ T̿ Ā̿,  Ā = A⊗A,  Ā̿ = A⊗A⊗A
  求和展开含 (N+1)^3 项、相互抵消，舍入误差随系数三次方增长；
  牛顿残差中改用等价的逐点形式 (T A)^3，块对角形式保留在 block_terms / matrix_cube
- 单项式基的残差有不可消除的舍入下限，收敛判据为 |r_i| <= tol + 舍入估计
"""
import bisect
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.polynomial import polynomial as P

from core.exceptions import (
    FhnNumericalError,
    InvalidDegree,
    InvalidInterval,
    NoConvergence,
    NonpositiveBound,
    SingularJacobian,
    SubintervalFailure,
)
from core.fhn_model import Derivative, FhnParams, State, cubic, cubic_derivative
from core.log_config import get_logger

# 使用封装的 get_logger
logger = get_logger(__name__)

MAX_DEGREE = 12               # 单项式基在高阶时条件数恶化，阶数上限
CONDITIONING_WARN_DEGREE = 10
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100
MAX_HALVINGS = 40
EPS = float(np.finfo(float).eps)
FLOOR_SAFETY = 4.0           # 舍入误差估计的放大系数
STAGNATION_FACTOR = 8.0      # 线搜索失败时仍视为收敛的舍入水平倍数


@dataclass(frozen=True, eq=False)
class CollocationGrid:
    d: float
    e: float
    n: int
    points: np.ndarray


@dataclass(frozen=True, eq=False)
class TaylorSolution:
    grid: CollocationGrid
    center: float
    coeff_v: np.ndarray
    coeff_w: np.ndarray
    newton_iters: int
    residual_norm: float
    ic: Optional[State] = None
    cpu_seconds: float = 0.0
    residual_floor: float = 0.0      # residual_norm <= tol + residual_floor

    @property
    def degree(self) -> int:
        return self.grid.n


def make_grid(d: float, e: float, n: int) -> CollocationGrid:
    """t_i = d + (e-d) i / n，i = 0..n"""
    if not (math.isfinite(d) and math.isfinite(e)) or d >= e:
        raise InvalidInterval(f"配置区间要求 d < e，当前：[{d}, {e}]")
    if int(n) != n or n < 1 or n > MAX_DEGREE:
        raise InvalidDegree(f"多项式阶数 N 必须满足 1 <= N <= {MAX_DEGREE}，当前值：{n}")
    n = int(n)
    if n >= CONDITIONING_WARN_DEGREE:
        logger.warning(f"⚠️ 【配置网格】N={n} 时单项式基条件数较大，建议改用分段求解")
    points = np.array([d + (e - d) * i / n for i in range(n + 1)])
    points[0] = d
    points[-1] = e
    return CollocationGrid(d=d, e=e, n=n, points=points)


# ==================== 矩阵关系 ====================
def taylor_row(t: float, c: float, n: int) -> np.ndarray:
    """T(t) = [1, (t-c), (t-c)^2, ..., (t-c)^N]"""
    return np.power(t - c, np.arange(n + 1, dtype=float))


def derivative_matrix(n: int) -> np.ndarray:
    """B：T(t) B A = d/dt [T(t) A]"""
    return np.diag(np.arange(1, n + 1, dtype=float), k=1)


def _block_rows(t: float, c: float, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 T、T T̄、T T̄ T̿ 三个行向量"""
    row = taylor_row(t, c, n)
    t_mat = sp.csr_matrix(row.reshape(1, -1))
    t_bar = sp.block_diag([t_mat] * (n + 1), format="csr")
    t_bar_bar = sp.block_diag([t_bar] * (n + 1), format="csr")
    square_row = t_mat @ t_bar
    cube_row = square_row @ t_bar_bar
    return row, square_row.toarray().ravel(), cube_row.toarray().ravel()


def matrix_square(coeff: Sequence[float], t: float, c: float = 0.0) -> float:
    """[v^2](t) = T T̄ Ā"""
    a = np.asarray(coeff, dtype=float)
    _, square_row, _ = _block_rows(t, c, a.size - 1)
    return float(square_row @ np.kron(a, a))


def matrix_cube(coeff: Sequence[float], t: float, c: float = 0.0) -> float:
    """[v^3](t) = T T̄ T̿ Ā̿"""
    a = np.asarray(coeff, dtype=float)
    _, _, cube_row = _block_rows(t, c, a.size - 1)
    return float(cube_row @ np.kron(a, np.kron(a, a)))


class AlgebraicSystem:
    """
    未知量 x = [A1; A2]，维数 2(N+1)
    第 2i 行：v'(t_i) - (f(v) - w + I)/mu；第 2i+1 行：w'(t_i) - v + gamma w
    最后两行：T(d)A1 - v0，T(d)A2 - w0

    牛顿迭代在缩放变量 B_k = A_k h^k 上进行，h = max|t_i - c|，使 T 行元素落在 [-1, 1]。
    三次项在配置点上按 [v^3](t_i) = (T(t_i) A)^3 计算，与 T T̄ T̿ Ā̿ 代数上相同（见 block_terms）
    """

    def __init__(self, params: FhnParams, grid: CollocationGrid, ic: State, center: float):
        self.params = params
        self.grid = grid
        self.ic = ic
        self.center = center
        n = grid.n
        self.size = n + 1
        self.dimension = 2 * (n + 1)

        self.scale = max(abs(grid.d - center), abs(grid.e - center))
        self._powers = np.power(self.scale, np.arange(n + 1, dtype=float))
        s = (grid.points - center) / self.scale
        self._t = np.vstack([taylor_row(float(si), 0.0, n) for si in s])     # (N+1, N+1)，缩放变量
        self._d = self._t @ derivative_matrix(n) / self.scale
        self._ic_row = taylor_row((grid.d - center) / self.scale, 0.0, n)
        self.pins_ic = center == grid.d

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return x[:self.size], x[self.size:]

    def to_scaled(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * np.tile(self._powers, 2)

    def from_scaled(self, b: np.ndarray) -> np.ndarray:
        return np.asarray(b, dtype=float) / np.tile(self._powers, 2)

    def initial_guess(self) -> np.ndarray:
        """与初值相容的常数多项式"""
        x = np.zeros(self.dimension)
        x[0] = self.ic.v
        x[self.size] = self.ic.w
        return x

    def pin_ic(self, b: np.ndarray) -> np.ndarray:
        """T(d) = e_0 时初值行是线性且可精确满足的，直接固定 0 阶系数"""
        if self.pins_ic:
            b = b.copy()
            b[0], b[self.size] = self.ic.v, self.ic.w
        return b

    # ---------- 原始系数 A ----------
    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.scaled_residual(self.to_scaled(x))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.scaled_jacobian(self.to_scaled(x)) * np.tile(self._powers, 2)[None, :]

    def block_terms(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """各配置点上的 [v^2] = T T̄ Ā 与 [v^3] = T T̄ T̿ Ā̿（块对角矩阵形式）"""
        a1, _ = self.split(np.asarray(x, dtype=float))
        rows = [_block_rows(float(t), self.center, self.grid.n) for t in self.grid.points]
        a_bar = np.kron(a1, a1)
        a_bar_bar = np.kron(a1, a_bar)
        return np.array([r[1] @ a_bar for r in rows]), np.array([r[2] @ a_bar_bar for r in rows])

    # ---------- 缩放系数 B ----------
    def scaled_residual(self, b: np.ndarray) -> np.ndarray:
        p = self.params
        b1, b2 = self.split(np.asarray(b, dtype=float))
        v = self._t @ b1
        w = self._t @ b2
        r = np.empty(self.dimension)
        r[0::2] = self._d @ b1 - (cubic(v, p.a) - w + p.current) / p.mu
        r[1::2] = self._d @ b2 - v + p.gamma * w
        r[-2] = self._ic_row @ b1 - self.ic.v
        r[-1] = self._ic_row @ b2 - self.ic.w
        return r

    def scaled_jacobian(self, b: np.ndarray) -> np.ndarray:
        p = self.params
        b1, _ = self.split(np.asarray(b, dtype=float))
        v = self._t @ b1
        n1 = self.size
        jac = np.zeros((self.dimension, self.dimension))
        jac[0::2, :n1] = self._d - (cubic_derivative(v, p.a) / p.mu)[:, None] * self._t
        jac[0::2, n1:] = self._t / p.mu
        jac[1::2, :n1] = -self._t
        jac[1::2, n1:] = self._d + p.gamma * self._t
        jac[-2, :] = 0.0
        jac[-2, :n1] = self._ic_row
        jac[-1, :] = 0.0
        jac[-1, n1:] = self._ic_row
        return jac

    def rounding_floor(self, b: np.ndarray) -> np.ndarray:
        """
        逐行的舍入误差估计：长度 N+1 的内积误差约 (N+1)·eps·sum|项|，
        v 的误差经 f'(v)/mu 传到第一条方程
        """
        p = self.params
        b1, b2 = self.split(np.abs(np.asarray(b, dtype=float)))
        t_abs = np.abs(self._t)
        d_abs = np.abs(self._d)
        unit = (self.size + 1) * EPS
        v = self._t @ np.asarray(b, dtype=float)[:self.size]
        dv = unit * (t_abs @ b1)
        dw = unit * (t_abs @ b2)
        forcing = np.abs(cubic(v, p.a)) + t_abs @ b2 + abs(p.current)
        floor = np.empty(self.dimension)
        floor[0::2] = unit * (d_abs @ b1) + (np.abs(cubic_derivative(v, p.a)) * dv + dw + EPS * forcing) / p.mu
        floor[1::2] = unit * (d_abs @ b2) + dv + p.gamma * dw
        floor[-2] = unit * (np.abs(self._ic_row) @ b1 + abs(self.ic.v))
        floor[-1] = unit * (np.abs(self._ic_row) @ b2 + abs(self.ic.w))
        return FLOOR_SAFETY * floor


def assemble(p: FhnParams, grid: CollocationGrid, ic: State, center: Optional[float] = None) -> AlgebraicSystem:
    """组装配置方程组；center 缺省为区间左端点（d=0 时即 c=0）"""
    return AlgebraicSystem(p, grid, ic, grid.d if center is None else center)


# ==================== 阻尼牛顿 ====================
def _newton_step(jac: np.ndarray, r: np.ndarray, updates: int) -> np.ndarray:
    # 行均衡：v 方程的量级是 w 方程的 1/mu 倍
    row_scale = np.max(np.abs(jac), axis=1)
    row_scale[row_scale == 0.0] = 1.0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            db = scipy.linalg.solve(jac / row_scale[:, None], -r / row_scale)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularJacobian(updates + 1, str(e)) from e
    if not np.all(np.isfinite(db)):
        raise SingularJacobian(updates + 1, "牛顿步含非有限值")
    return db


def solve(sys: AlgebraicSystem, init: Optional[np.ndarray] = None, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> TaylorSolution:
    """
    阻尼牛顿（步长减半线搜索，最多 40 次）
    收敛判据：每一行 |r_i| <= tol + floor_i，floor_i 为该行的舍入误差估计（见 rounding_floor）
    """
    if tol <= 0:
        raise ValueError(f"solve 容差必须为正，当前值：{tol}")
    start = time.perf_counter()
    b = sys.to_scaled(sys.initial_guess() if init is None else np.array(init, dtype=float))
    b = sys.pin_ic(b)
    r = sys.scaled_residual(b)
    r_norm = float(np.max(np.abs(r)))
    best_b, best_norm = b.copy(), r_norm
    updates = 0

    while not np.all(np.abs(r) <= tol + sys.rounding_floor(b)):
        if updates >= max_iter:
            logger.error(f"❌ 【牛顿迭代】N={sys.grid.n}，{max_iter} 次迭代后残差={best_norm:.3e}")
            raise NoConvergence(updates, best_norm, sys.from_scaled(best_b))
        db = _newton_step(sys.scaled_jacobian(b), r, updates)

        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            b_trial = sys.pin_ic(b + lam * db)
            r_trial = sys.scaled_residual(b_trial)
            trial_norm = float(np.max(np.abs(r_trial)))
            if np.isfinite(trial_norm) and trial_norm < r_norm:
                break
            lam *= 0.5
        else:
            if np.all(np.abs(r) <= tol + STAGNATION_FACTOR * sys.rounding_floor(b)):
                logger.debug(f"📊 【牛顿迭代】残差停滞于舍入误差水平，||r||_inf={r_norm:.3e}")
                break
            logger.error(f"❌ 【牛顿迭代】线搜索失败，iter={updates + 1}，残差={r_norm:.3e}")
            raise NoConvergence(updates, best_norm, sys.from_scaled(best_b), reason="线搜索失败")

        b, r, r_norm = b_trial, r_trial, trial_norm
        updates += 1
        logger.debug(f"📊 【牛顿迭代】iter={updates}，lambda={lam:.3g}，||r||_inf={r_norm:.3e}")
        if r_norm < best_norm:
            best_b, best_norm = b.copy(), r_norm

    x = sys.from_scaled(b)
    a1, a2 = sys.split(x)
    elapsed = time.perf_counter() - start
    logger.debug(f"🏁 【牛顿迭代】收敛，N={sys.grid.n}，iters={updates}，耗时={elapsed:.3f}s")
    return TaylorSolution(
        grid=sys.grid,
        center=sys.center,
        coeff_v=a1.copy(),
        coeff_w=a2.copy(),
        newton_iters=updates,
        residual_norm=r_norm,
        ic=sys.ic,
        cpu_seconds=elapsed,
        residual_floor=float(np.max(sys.rounding_floor(b))),
    )


# ==================== 求值与诊断 ====================
def _check_extrapolation(sol: TaylorSolution, t: float) -> None:
    span = sol.grid.e - sol.grid.d
    if t < sol.grid.d - 1e-12 * span or t > sol.grid.e + 1e-12 * span:
        logger.warning(f"⚠️ 【多项式求值】t={t} 超出 [{sol.grid.d}, {sol.grid.e}]，属于外推")


def evaluate(sol: TaylorSolution, t: float) -> State:
    """对 (t-c) 的幂做 Horner 求值"""
    _check_extrapolation(sol, t)
    s = t - sol.center
    return State(float(P.polyval(s, sol.coeff_v)), float(P.polyval(s, sol.coeff_w)))


def derivative(sol: TaylorSolution, t: float) -> Tuple[float, float]:
    s = t - sol.center
    return float(P.polyval(s, P.polyder(sol.coeff_v))), float(P.polyval(s, P.polyder(sol.coeff_w)))


def ode_residual(sol: TaylorSolution, p: FhnParams, t: float) -> Derivative:
    """把多项式代回原方程：(v' - (f(v)-w+I)/mu, w' - v + gamma w)"""
    state = evaluate(sol, t)
    dv, dw = derivative(sol, t)
    return Derivative(
        dv=dv - (cubic(state.v, p.a) - state.w + p.current) / p.mu,
        dw=dw - state.v + p.gamma * state.w,
    )


def error_bound(sol: TaylorSolution, deriv_bound: float,
                coefficient_errors: Optional[Sequence[float]] = None) -> float:
    """
    ||u - u_N||_inf <= M/(N+1)! * deriv_bound + L * max|e_n(c)|
    M = max |t-c|^{N+1}，L = max_n max_t |t-c|^n / n!
    coefficient_errors 缺省时只给出第一项；e_0 视为 0（初值精确满足）
    """
    if not deriv_bound > 0:
        raise NonpositiveBound(f"deriv_bound 必须为正，当前值：{deriv_bound}")
    n = sol.grid.n
    radius = max(abs(sol.grid.d - sol.center), abs(sol.grid.e - sol.center))
    m_const = radius ** (n + 1)
    bound = m_const / math.factorial(n + 1) * deriv_bound
    if coefficient_errors is not None:
        errs = np.abs(np.asarray(coefficient_errors, dtype=float))
        if errs.size:
            errs = errs.copy()
            errs[0] = 0.0
            l_const = max(radius ** k / math.factorial(k) for k in range(n + 1))
            bound += l_const * float(np.max(errs))
    return bound


# ==================== 分段推进 ====================
def solve_piecewise(p: FhnParams, d: float, e: float, n: int, n_sub: int, ic: State,
                    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> List[TaylorSolution]:
    """把 [d,e] 等分为 n_sub 段，每段以前一段终值为初值、以左端点为展开中心"""
    if int(n_sub) != n_sub or n_sub < 1:
        raise ValueError(f"n_sub 必须是 >=1 的整数，当前值：{n_sub}")
    if not (math.isfinite(d) and math.isfinite(e)) or d >= e:
        raise InvalidInterval(f"分段区间要求 d < e，当前：[{d}, {e}]")
    start = time.perf_counter()
    edges = [d + (e - d) * k / n_sub for k in range(n_sub + 1)]
    edges[-1] = e
    solutions: List[TaylorSolution] = []
    state = ic
    for k in range(n_sub):
        try:
            grid = make_grid(edges[k], edges[k + 1], n)
            sol = solve(assemble(p, grid, state, center=edges[k]), tol=tol, max_iter=max_iter)
        except FhnNumericalError as err:
            logger.error(f"❌ 【分段求解】第 {k} 段 [{edges[k]}, {edges[k + 1]}] 失败：{err}")
            raise SubintervalFailure(k, err) from err
        solutions.append(sol)
        state = evaluate(sol, edges[k + 1])
    logger.info(f"🏁 【分段求解】N={n}，n_sub={n_sub}，总牛顿迭代={sum(s.newton_iters for s in solutions)}，"
                f"耗时={time.perf_counter() - start:.3f}s")
    return solutions


def evaluate_piecewise(solutions: Sequence[TaylorSolution], t: float) -> State:
    """在包含 t 的子区间上求值（端点处取右侧子区间）"""
    lefts = [s.grid.d for s in solutions]
    k = max(0, min(len(solutions) - 1, bisect.bisect_right(lefts, t) - 1))
    return evaluate(solutions[k], t)
