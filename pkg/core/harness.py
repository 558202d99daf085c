"""
- 运行配置 RunConfig 与方法分发（euler / taylor / taylor-piecewise / reference）
- 收敛表（v、w 两张误差表 + cpu 耗时）、tau 扫描、Taylor 误差界所需的导数估计
- 图数据导出：相图、分岔图、特征值谱、轨迹；CSV 为主，JSON 为镜像
"""
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core import collocation, fdm, stability
from core.data_utils import format_python_to_json
from core.exceptions import FhnConfigError, FhnNumericalError
from core.fhn_model import FhnParams, State
from core.log_config import get_logger
from core.reference import SampledTrajectory, default_step, reference_solve

# 使用封装的 get_logger
logger = get_logger(__name__)

METHODS = ("euler", "taylor", "taylor-piecewise", "reference")
FORMATS = ("csv", "json")
DEFAULT_SAMPLE_STEP = 0.1
DEFAULT_DEGREES = (4, 5, 6)
NULLCLINE_POINTS = 1000
FLOAT_FORMAT = "%.17g"        # 17 位有效数字，CSV 回读逐位一致

__all__ = [
    "SampledTrajectory", "reference_solve", "default_step", "RunConfig", "ConvergenceTable", "TauSweep",
    "run_method", "build_convergence_table", "write_convergence_table", "tau_sweep",
    "series_coefficients", "estimate_derivative_bound", "estimate_center_errors",
    "export_phase_portrait", "export_bifurcation", "export_spectra", "export_trajectory",
    "write_frame", "read_frame",
]


def default_sample_times(horizon: float, step: float = DEFAULT_SAMPLE_STEP) -> np.ndarray:
    """0, step, 2*step, ..., horizon（最后一点强制为 horizon）"""
    n = max(1, int(round(horizon / step)))
    times = np.array([horizon * k / n for k in range(n + 1)])
    times[-1] = horizon
    return times


@dataclass(frozen=True, eq=False)
class RunConfig:
    params: FhnParams
    ic: State
    horizon: float
    method: str = "euler"
    tau: Optional[float] = None
    degree: Optional[int] = None
    n_sub: Optional[int] = None
    tol: float = collocation.DEFAULT_TOL
    out: Optional[str] = None
    fmt: str = "csv"
    sample_times: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon) and self.horizon > 0):
            raise FhnConfigError(f"T（horizon）必须为正，当前值：{self.horizon}")
        if self.method not in METHODS:
            raise FhnConfigError(f"method 必须是 {METHODS} 之一，当前值：{self.method}")
        if self.fmt not in FORMATS:
            raise FhnConfigError(f"format 必须是 {FORMATS} 之一，当前值：{self.fmt}")
        if self.method == "euler":
            if self.tau is None or not self.tau > 0:
                raise FhnConfigError(f"euler 方法需要 tau > 0，当前值：{self.tau}")
            steps = round(self.horizon / self.tau)
            if steps < 1 or abs(self.tau * steps - self.horizon) > 1e-9 * max(1.0, self.horizon):
                raise FhnConfigError(f"T={self.horizon} 必须是 tau={self.tau} 的整数倍")
        if self.method.startswith("taylor"):
            if self.degree is None:
                raise FhnConfigError(f"{self.method} 方法需要多项式阶数 N")
            if self.method == "taylor-piecewise" and (self.n_sub is None or self.n_sub < 1):
                raise FhnConfigError(f"taylor-piecewise 方法需要 n_sub >= 1，当前值：{self.n_sub}")
        if not self.tol > 0:
            raise FhnConfigError(f"tol 必须为正，当前值：{self.tol}")

        times = default_sample_times(self.horizon) if self.sample_times is None \
            else np.asarray(self.sample_times, dtype=float)
        if times.size == 0 or times[0] < 0.0 or times[-1] > self.horizon or np.any(np.diff(times) < 0):
            raise FhnConfigError(f"采样时刻必须升序且位于 [0, {self.horizon}]")
        object.__setattr__(self, "sample_times", times)


# ==================== 方法分发 ====================
def _sample_euler(cfg: RunConfig) -> SampledTrajectory:
    steps = int(round(cfg.horizon / cfg.tau))
    traj = fdm.simulate(cfg.params, fdm.EulerConfig.from_horizon(cfg.tau, cfg.horizon, cfg.ic))
    idx = np.rint(cfg.sample_times / cfg.tau).astype(int)
    if np.any(np.abs(idx * cfg.tau - cfg.sample_times) > 1e-6 * cfg.tau) or np.any(idx > steps):
        raise FhnConfigError(f"euler 采样时刻必须是 tau={cfg.tau} 的整数倍")
    return SampledTrajectory(times=cfg.sample_times, v=traj.v_seq[idx], w=traj.w_seq[idx])


def _sample_polynomials(cfg: RunConfig) -> SampledTrajectory:
    if cfg.method == "taylor":
        grid = collocation.make_grid(0.0, cfg.horizon, cfg.degree)
        sol = collocation.solve(collocation.assemble(cfg.params, grid, cfg.ic), tol=cfg.tol)
        states = [collocation.evaluate(sol, float(t)) for t in cfg.sample_times]
    else:
        sols = collocation.solve_piecewise(cfg.params, 0.0, cfg.horizon, cfg.degree, cfg.n_sub, cfg.ic, tol=cfg.tol)
        states = [collocation.evaluate_piecewise(sols, float(t)) for t in cfg.sample_times]
    return SampledTrajectory(times=cfg.sample_times,
                             v=np.array([s.v for s in states]),
                             w=np.array([s.w for s in states]))


def run_method(cfg: RunConfig) -> Tuple[SampledTrajectory, float]:
    """按 cfg.method 求解并在采样时刻取值；返回 (轨迹, 求解耗时秒数)，耗时不含 I/O"""
    start = time.perf_counter()
    if cfg.method == "euler":
        traj = _sample_euler(cfg)
    elif cfg.method == "reference":
        traj = reference_solve(cfg.params, cfg.ic, cfg.horizon, cfg.sample_times)
    else:
        traj = _sample_polynomials(cfg)
    elapsed = time.perf_counter() - start
    logger.info(f"🏁 【求解】method={cfg.method}，采样点={len(traj)}，耗时={elapsed:.3f}s")
    return traj, elapsed


# ==================== 收敛表 ====================
@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    """
    err_v / err_w：形状 (len(degrees), len(sample_times))，失败行为 NaN
    cpu：每行求解耗时（秒，保留 3 位小数），失败行为 None
    """
    sample_times: np.ndarray
    degrees: List[int]
    err_v: np.ndarray
    err_w: np.ndarray
    cpu: List[Optional[float]]
    failed: List[bool] = field(default_factory=list)

    def frame(self, variable: str) -> pd.DataFrame:
        errs = self.err_v if variable == "v" else self.err_w
        data = {"t": self.sample_times}
        for row, n in enumerate(self.degrees):
            data[f"err_N{n}"] = errs[row]
        return pd.DataFrame(data)

    def cpu_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"N": self.degrees, "seconds": [np.nan if c is None else c for c in self.cpu]})

    def row_max(self, variable: str = "v") -> np.ndarray:
        """每个 N 在所有采样时刻上的 L∞ 误差"""
        errs = self.err_v if variable == "v" else self.err_w
        if errs.size == 0:
            return np.empty(0)
        return np.max(errs, axis=1)


def build_convergence_table(cfg: RunConfig, degrees: Sequence[int] = DEFAULT_DEGREES) -> ConvergenceTable:
    """逐个 N 求解，记录与参考解在各采样时刻的 |误差|；不收敛的行标记为失败"""
    if not cfg.method.startswith("taylor"):
        raise FhnConfigError(f"收敛表只支持 taylor / taylor-piecewise，当前 method={cfg.method}")
    times = cfg.sample_times
    degrees = [int(n) for n in degrees]
    n_rows = len(degrees)
    err_v = np.full((n_rows, times.size), np.nan)
    err_w = np.full((n_rows, times.size), np.nan)
    cpu: List[Optional[float]] = []
    failed: List[bool] = []
    if not degrees:
        logger.info("📊 【收敛表】阶数列表为空，返回空表")
        return ConvergenceTable(times, degrees, err_v, err_w, cpu, failed)

    ref = reference_solve(cfg.params, cfg.ic, cfg.horizon, times)
    logger.info(f"🚀 【收敛表】method={cfg.method}，N={degrees}，采样点={times.size}")
    for row, n in enumerate(degrees):
        try:
            traj, elapsed = run_method(replace(cfg, degree=n, sample_times=times))
        except FhnNumericalError as e:
            logger.error(f"❌ 【收敛表】N={n} 求解失败，该行标记为 failed：{e}", exc_info=True)
            cpu.append(None)
            failed.append(True)
            continue
        err_v[row] = np.abs(traj.v - ref.v)
        err_w[row] = np.abs(traj.w - ref.w)
        cpu.append(round(elapsed, 3))
        failed.append(False)
        logger.info(f"📊 【收敛表】N={n}，L∞(v)={np.max(err_v[row]):.3e}，L∞(w)={np.max(err_w[row]):.3e}，"
                    f"cpu={elapsed:.3f}s")
    return ConvergenceTable(times, degrees, err_v, err_w, cpu, failed)


def write_convergence_table(table: ConvergenceTable, out_dir: Union[str, Path], fmt: str = "csv") -> List[Path]:
    """写出 err_v、err_w、cpu 三个文件"""
    out_dir = Path(out_dir)
    return [
        write_frame(table.frame("v"), out_dir / f"err_v.{fmt}", fmt),
        write_frame(table.frame("w"), out_dir / f"err_w.{fmt}", fmt),
        write_frame(table.cpu_frame(), out_dir / f"cpu.{fmt}", fmt),
    ]


# ==================== tau 扫描 ====================
@dataclass(frozen=True, eq=False)
class TauSweep:
    taus: List[float]
    errors: List[float]
    orders: List[float]        # 相邻两个 tau 之间的经验收敛阶
    constant: float            # max(err / tau)
    l2_errors: List[float] = field(default_factory=list)   # 最粗网格上的离散 L2 范数 ||e||_{2tau}


def tau_sweep(p: FhnParams, ic: State, horizon: float, taus: Sequence[float]) -> TauSweep:
    """显式格式对参考解的 L∞ 误差与离散 L2 误差，在最粗 tau 的网格点上比较"""
    taus = sorted((float(t) for t in taus), reverse=True)
    if len(taus) < 2:
        raise FhnConfigError("tau_sweep 至少需要两个步长")
    coarse = taus[0]
    times = np.minimum(coarse * np.arange(int(round(horizon / coarse)) + 1), horizon)
    ref = reference_solve(p, ic, horizon, times)
    errors = []
    l2_errors = []
    for tau in taus:
        cfg = RunConfig(params=p, ic=ic, horizon=horizon, method="euler", tau=tau, sample_times=times)
        traj, _ = run_method(cfg)
        gap = np.hypot(traj.v - ref.v, traj.w - ref.w)
        errors.append(float(np.max(np.maximum(np.abs(traj.v - ref.v), np.abs(traj.w - ref.w)))))
        l2_errors.append(fdm.grid_norm(gap, coarse))
    orders = [math.log(errors[k - 1] / errors[k]) / math.log(taus[k - 1] / taus[k]) for k in range(1, len(taus))]
    constant = max(e / t for e, t in zip(errors, taus))
    logger.info(f"📊 【tau 扫描】误差={['%.3e' % e for e in errors]}，经验阶={['%.3f' % o for o in orders]}，"
                f"C={constant:.3f}")
    return TauSweep(taus=taus, errors=errors, orders=orders, constant=constant, l2_errors=l2_errors)


# ==================== Taylor 误差界辅助 ====================
def series_coefficients(p: FhnParams, ic: State, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    初值点处真解的 Taylor 系数 u_n = u^{(n)}(0)/n!（幂级数递推，三次项用 Cauchy 乘积）
      v_{n+1} = [(-v^3 + (1+a)v^2 - a v)_n - w_n + I δ_{n0}] / (mu (n+1))
      w_{n+1} = (v_n - gamma w_n) / (n+1)
    """
    v = np.zeros(order + 1)
    w = np.zeros(order + 1)
    v2 = np.zeros(order + 1)
    v3 = np.zeros(order + 1)
    v[0], w[0] = ic.v, ic.w
    for n in range(order):
        v2[n] = np.dot(v[:n + 1], v[n::-1])
        v3[n] = np.dot(v2[:n + 1], v[n::-1])
        forcing = -v3[n] + (1.0 + p.a) * v2[n] - p.a * v[n] - w[n] + (p.current if n == 0 else 0.0)
        v[n + 1] = forcing / (p.mu * (n + 1))
        w[n + 1] = (v[n] - p.gamma * w[n]) / (n + 1)
    return v, w


def estimate_derivative_bound(p: FhnParams, ic: State, d: float, e: float, order: int,
                              n_samples: int = 101, safety: float = 2.0) -> float:
    """参考解的 order 阶有限差分，取 [d,e] 上 v、w 的最大绝对值并乘安全系数"""
    if n_samples <= order + 1:
        raise FhnConfigError(f"n_samples 必须大于 order+1，当前：n_samples={n_samples}，order={order}")
    times = np.linspace(d, e, n_samples)
    ref = reference_solve(p, ic, e, times)
    v, w = ref.v, ref.w
    h = (e - d) / (n_samples - 1)
    scale = h ** order
    bound = max(np.max(np.abs(np.diff(v, n=order))), np.max(np.abs(np.diff(w, n=order)))) / scale
    logger.debug(f"📊 【导数估计】order={order}，h={h:.3e}，max|u^(order)|≈{bound:.3e}")
    return float(safety * bound)


def estimate_center_errors(sol: collocation.TaylorSolution, p: FhnParams) -> np.ndarray:
    """e_n(c) = u^{(n)}(c) - u_N^{(n)}(c)，取 v、w 中绝对值较大者；要求展开中心即初值点"""
    if sol.ic is None or sol.center != sol.grid.d:
        raise FhnConfigError("estimate_center_errors 要求展开中心与初值点重合")
    n = sol.grid.n
    u_v, u_w = series_coefficients(p, sol.ic, n)
    fact = np.array([math.factorial(k) for k in range(n + 1)], dtype=float)
    e_v = fact * (u_v - sol.coeff_v)
    e_w = fact * (u_w - sol.coeff_w)
    return np.where(np.abs(e_v) >= np.abs(e_w), e_v, e_w)


# ==================== 文件输出 ====================
def write_frame(frame: pd.DataFrame, path: Union[str, Path], fmt: str = "csv") -> Path:
    """CSV：17 位有效数字，缺失值写空字段；JSON：记录列表，缺失值为 null"""
    path = Path(path)
    if fmt not in FORMATS:
        raise FhnConfigError(f"format 必须是 {FORMATS} 之一，当前值：{fmt}")
    if path.suffix != f".{fmt}":
        path = path.with_suffix(f".{fmt}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
        else:
            records = frame.astype(object).where(frame.notna(), None).to_dict(orient="records")
            path.write_text(format_python_to_json(records, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"❌ 【文件输出】写入失败：{path}", exc_info=True)
        raise OSError(f"写入失败：{path}：{e}") from e
    logger.info(f"💾 【文件输出】{path}（{len(frame)} 行）")
    return path


def read_frame(path: Union[str, Path]) -> pd.DataFrame:
    """按写出格式回读；CSV 使用 round_trip 解析保证逐位一致"""
    path = Path(path)
    if path.suffix == ".json":
        return pd.read_json(path, orient="records", precise_float=True)
    return pd.read_csv(path, float_precision="round_trip", keep_default_na=True)


def export_trajectory(traj: SampledTrajectory, path: Union[str, Path], fmt: str = "csv") -> Path:
    return write_frame(pd.DataFrame({"t": traj.times, "v": traj.v, "w": traj.w}), path, fmt)


def export_phase_portrait(p: FhnParams, trajectories: Sequence[SampledTrajectory], v_range: Tuple[float, float],
                          path: Union[str, Path], fmt: str = "csv", n_points: int = NULLCLINE_POINTS) -> Path:
    """
    列 kind,t,v,w；kind ∈ {trajectory, v-nullcline, w-nullcline, equilibrium, ic}
    零倾线在 v_range 上取 n_points 个点，并插入区间内的平衡点横坐标
    """
    v_lo, v_hi = v_range
    if not v_lo < v_hi:
        raise FhnConfigError(f"v_range 要求 v_lo < v_hi，当前：{v_range}")
    equilibria = stability.find_equilibria(p)
    v_grid = np.linspace(v_lo, v_hi, n_points)
    inside = [r.v_star for r in equilibria if v_lo <= r.v_star <= v_hi]
    v_grid = np.unique(np.concatenate([v_grid, inside]))
    curves = stability.nullclines(p, v_grid)

    parts = []
    for traj in trajectories:
        parts.append(pd.DataFrame({"kind": "ic", "t": [traj.times[0]], "v": [traj.v[0]], "w": [traj.w[0]]}))
        parts.append(pd.DataFrame({"kind": "trajectory", "t": traj.times, "v": traj.v, "w": traj.w}))
    parts.append(pd.DataFrame({"kind": "v-nullcline", "t": np.nan,
                               "v": curves.v_nullcline[:, 0], "w": curves.v_nullcline[:, 1]}))
    parts.append(pd.DataFrame({"kind": "w-nullcline", "t": np.nan,
                               "v": curves.w_nullcline[:, 0], "w": curves.w_nullcline[:, 1]}))
    parts.append(pd.DataFrame({"kind": "equilibrium", "t": np.nan,
                               "v": [r.v_star for r in equilibria], "w": [r.w_star for r in equilibria]}))
    frame = pd.concat(parts, ignore_index=True)[["kind", "t", "v", "w"]]
    return write_frame(frame, path, fmt)


def bifurcation_frame(points: Sequence[stability.BranchPoint]) -> pd.DataFrame:
    return pd.DataFrame({
        "I": [bp.current for bp in points],
        "v_star": [bp.v_star for bp in points],
        "stable": [int(bp.stable) for bp in points],
        "re_l1": [bp.eigen.lambda1.real for bp in points],
        "re_l2": [bp.eigen.lambda2.real for bp in points],
        "im_l1": [bp.eigen.lambda1.imag for bp in points],
        "lc_min": [np.nan if bp.lc_min is None else bp.lc_min for bp in points],
        "lc_max": [np.nan if bp.lc_max is None else bp.lc_max for bp in points],
    })


def export_bifurcation(p_base: FhnParams, i_lo: float, i_hi: float, n_points: int, path: Union[str, Path],
                       fmt: str = "csv", sim_cfg: Optional[stability.ScanSimConfig] = None) -> Path:
    """列 I,v_star,stable,re_l1,re_l2,im_l1,lc_min,lc_max；稳定行的 lc 列为空"""
    if n_points < 2:
        raise FhnConfigError(f"n_points 必须 >= 2，当前值：{n_points}")
    if not i_lo < i_hi:
        raise FhnConfigError(f"分岔区间要求 i_lo < i_hi，当前：[{i_lo}, {i_hi}]")
    points = stability.bifurcation_scan(p_base, np.linspace(i_lo, i_hi, n_points), sim_cfg)
    return write_frame(bifurcation_frame(points), path, fmt)


def export_spectra(p_base: FhnParams, currents: Sequence[float], path: Union[str, Path], fmt: str = "csv") -> Path:
    """每个 I 的平衡点、稳定性类别与特征值对"""
    rows: List[Dict[str, object]] = []
    for current, r in stability.equilibrium_spectra(p_base, currents):
        rows.append({
            "I": current, "v_star": r.v_star, "w_star": r.w_star, "stability": r.stability.value,
            "re_l1": r.eigen.lambda1.real, "im_l1": r.eigen.lambda1.imag,
            "re_l2": r.eigen.lambda2.real, "im_l2": r.eigen.lambda2.imag,
        })
    columns = ["I", "v_star", "w_star", "stability", "re_l1", "im_l1", "re_l2", "im_l2"]
    return write_frame(pd.DataFrame(rows, columns=columns), path, fmt)
