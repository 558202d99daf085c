"""
命令行入口：python run_cli.py <子命令> [选项]
配置优先级：默认值（基准参数） < --profile 配置档 < --config key=value 文件 < 命令行参数
退出码：0 成功；2 参数/配置错误；3 数值失败；1 文件读写失败
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core import fdm, harness, stability
from core.data_utils import format_python_to_json, load_profile_config, merge_config, read_kv_config
from core.exceptions import FhnConfigError, FhnNumericalError
from core.fhn_model import BASELINE_A, BASELINE_GAMMA, BASELINE_IC, BASELINE_MU, FhnParams, State
from core.log_config import get_logger, setup_global_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

DEFAULTS: Dict[str, Any] = {
    "a": BASELINE_A, "gamma": BASELINE_GAMMA, "mu": BASELINE_MU, "I": 0.0,
    "v0": BASELINE_IC[0], "w0": BASELINE_IC[1],
    "tau": 0.00025, "T": 1.0, "N": 4, "n_sub": 500, "tol": 1e-12,
    "degrees": [4, 5, 6], "out": "results", "format": "csv",
}


# ==================== argparse 类型 ====================
def _float_list(count: int):
    def parse(text: str) -> List[float]:
        try:
            values = [float(s) for s in text.split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"需要 {count} 个逗号分隔的数值，当前：{text!r}")
        if len(values) != count:
            raise argparse.ArgumentTypeError(f"需要 {count} 个逗号分隔的数值，当前：{text!r}")
        return values
    return parse


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要正数，当前：{text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"必须为正，当前：{text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要正整数，当前：{text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"必须 >= 1，当前：{text}")
    return value


def _int_list(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数，当前：{text!r}")


def _interval(text: str) -> List[float]:
    lo, hi = _float_list(2)(text)
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"区间要求 lo < hi，当前：{text}")
    return [lo, hi]


# ==================== 解析器 ====================
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", type=_float_list(4), metavar="a,gamma,mu,I", help="模型参数")
    common.add_argument("--ic", type=_float_list(2), metavar="v,w", help="初值")
    common.add_argument("--config", metavar="PATH", help="key=value 配置文件")
    common.add_argument("--profile", metavar="NAME", help="config/fhn_config.json 中的配置档")
    common.add_argument("--out", metavar="PATH", help="输出目录或文件")
    common.add_argument("--format", choices=["csv", "json"], help="输出格式")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="控制台日志级别")

    parser = argparse.ArgumentParser(prog="fhn", description="FitzHugh-Nagumo 数值实验工具")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="按方法求解并输出轨迹")
    p.add_argument("--method", default="euler", choices=list(harness.METHODS))
    p.add_argument("--tau", type=_positive_float)
    p.add_argument("--T", type=_positive_float)
    p.add_argument("--N", type=_positive_int)
    p.add_argument("--n-sub", dest="n_sub", type=_positive_int)
    p.add_argument("--tol", type=_positive_float)
    p.add_argument("--samples", type=_positive_int, default=1001, help="均匀采样点数")

    sub.add_parser("equilibria", parents=[common], help="平衡点与稳定性报告")

    p = sub.add_parser("hopf", parents=[common], help="扫描 Hopf 分岔点")
    p.add_argument("--range", dest="i_range", type=_interval, default=[0.0, 1.0], metavar="lo,hi")
    p.add_argument("--grid", type=_positive_int, default=stability.HOPF_SCAN_POINTS)

    p = sub.add_parser("bifurcation", parents=[common], help="导出分岔图数据")
    p.add_argument("--range", dest="i_range", type=_interval, default=[0.0, 1.0], metavar="lo,hi")
    p.add_argument("--points", type=_positive_int, default=200)
    p.add_argument("--sim", choices=["euler", "reference"], default="euler", help="极限环积分方式")
    p.add_argument("--sim-tau", type=_positive_float, default=1e-5)
    p.add_argument("--sim-T", type=_positive_float, default=5.0)
    p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("phase", parents=[common], help="导出相图数据")
    p.add_argument("--v-range", type=_interval, default=[-0.4, 1.2], metavar="lo,hi")
    p.add_argument("--T", type=_positive_float)
    p.add_argument("--samples", type=_positive_int, default=1001)

    p = sub.add_parser("converge", parents=[common], help="Taylor 配置法收敛表")
    p.add_argument("--method", default="taylor-piecewise", choices=["taylor", "taylor-piecewise"])
    p.add_argument("--degrees", type=_int_list)
    p.add_argument("--T", type=_positive_float)
    p.add_argument("--n-sub", dest="n_sub", type=_positive_int)
    p.add_argument("--tol", type=_positive_float)

    p = sub.add_parser("check-stability", parents=[common], help="显式格式稳定性估计校验")
    p.add_argument("--tau", type=_positive_float)
    p.add_argument("--T", type=_positive_float)

    p = sub.add_parser("spectra", parents=[common], help="各输入电流下的特征值谱")
    p.add_argument("--range", dest="i_range", type=_interval, default=[0.0, 1.0], metavar="lo,hi")
    p.add_argument("--points", type=_positive_int, default=101)
    return parser


def resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    """默认值 < 配置档 < key=value 文件 < 命令行"""
    profile = load_profile_config(profile=args.profile) if args.profile else None
    kv = read_kv_config(args.config) if args.config else None
    cli: Dict[str, Any] = {"out": args.out, "format": args.format}
    if args.params:
        cli.update(dict(zip(("a", "gamma", "mu", "I"), args.params)))
    if args.ic:
        cli.update(v0=args.ic[0], w0=args.ic[1])
    for key in ("tau", "T", "N", "n_sub", "tol", "degrees"):
        cli[key] = getattr(args, key, None)
    return merge_config(DEFAULTS, profile, kv, cli)


def _target(cfg: Dict[str, Any], name: str) -> Path:
    out = Path(cfg["out"])
    if out.suffix in (".csv", ".json"):
        return out
    return out / f"{name}.{cfg['format']}"


def _emit(frame: pd.DataFrame, fmt: str) -> None:
    if fmt == "json":
        records = frame.astype(object).where(frame.notna(), None).to_dict(orient="records")
        sys.stdout.write(format_python_to_json(records, indent=2) + "\n")
    else:
        sys.stdout.write(frame.to_csv(index=False, float_format=harness.FLOAT_FORMAT, na_rep=""))


def _sample_grid(horizon: float, samples: int) -> np.ndarray:
    times = np.linspace(0.0, horizon, samples)
    times[-1] = horizon
    return times


# ==================== 子命令 ====================
def cmd_simulate(args, cfg, p: FhnParams, ic: State) -> int:
    run = harness.RunConfig(params=p, ic=ic, horizon=cfg["T"], method=args.method, tau=cfg["tau"],
                            degree=cfg["N"], n_sub=cfg["n_sub"], tol=cfg["tol"], fmt=cfg["format"],
                            sample_times=_sample_grid(cfg["T"], args.samples))
    traj, _ = harness.run_method(run)
    path = harness.export_trajectory(traj, _target(cfg, "trajectory"), cfg["format"])
    print(path)
    return EXIT_OK


def cmd_equilibria(args, cfg, p: FhnParams, ic: State) -> int:
    reports = stability.find_equilibria(p)
    frame = pd.DataFrame([{
        "v_star": r.v_star, "w_star": r.w_star, "stability": r.stability.value,
        "re_l1": r.eigen.lambda1.real, "im_l1": r.eigen.lambda1.imag,
        "re_l2": r.eigen.lambda2.real, "im_l2": r.eigen.lambda2.imag,
        "multiplicity": r.multiplicity,
    } for r in reports])
    _emit(frame, cfg["format"])
    return EXIT_OK


def cmd_hopf(args, cfg, p: FhnParams, ic: State) -> int:
    points = stability.find_hopf(p, args.i_range[0], args.i_range[1], n_grid=args.grid)
    frame = pd.DataFrame({"i_crit": [h.i_crit for h in points],
                          "omega_imag": [h.omega_imag for h in points],
                          "v_star": [h.v_star for h in points]})
    _emit(frame, cfg["format"])
    return EXIT_OK


def cmd_bifurcation(args, cfg, p: FhnParams, ic: State) -> int:
    sim = stability.ScanSimConfig(method=args.sim, tau=args.sim_tau, horizon=args.sim_T, ic=ic,
                                  workers=args.workers)
    path = harness.export_bifurcation(p, args.i_range[0], args.i_range[1], args.points,
                                      _target(cfg, "bifurcation"), cfg["format"], sim)
    print(path)
    return EXIT_OK


def cmd_phase(args, cfg, p: FhnParams, ic: State) -> int:
    traj = harness.reference_solve(p, ic, cfg["T"], _sample_grid(cfg["T"], args.samples))
    path = harness.export_phase_portrait(p, [traj], tuple(args.v_range), _target(cfg, "phase"), cfg["format"])
    print(path)
    return EXIT_OK


def cmd_converge(args, cfg, p: FhnParams, ic: State) -> int:
    run = harness.RunConfig(params=p, ic=ic, horizon=cfg["T"], method=args.method, degree=cfg["N"],
                            n_sub=cfg["n_sub"], tol=cfg["tol"], fmt=cfg["format"])
    table = harness.build_convergence_table(run, cfg["degrees"])
    for path in harness.write_convergence_table(table, cfg["out"], cfg["format"]):
        print(path)
    return EXIT_NUMERICAL if any(table.failed) else EXIT_OK


def cmd_check_stability(args, cfg, p: FhnParams, ic: State) -> int:
    traj = fdm.simulate(p, fdm.EulerConfig.from_horizon(cfg["tau"], cfg["T"], ic))
    checks = fdm.check_stability_bounds(traj, p) + [fdm.forcing_extreme(traj, p)]
    frame = pd.DataFrame([{"estimate": c.estimate, "k": c.k, "lhs": c.lhs, "rhs": c.rhs,
                           "satisfied": int(c.satisfied)} for c in checks])
    harness.write_frame(frame, _target(cfg, "stability_checks"), cfg["format"])
    summary = frame.groupby("estimate", sort=False).agg(
        steps=("k", "size"), violations=("satisfied", lambda s: int((s == 0).sum())),
        max_lhs=("lhs", "max"), min_rhs=("rhs", "min")).reset_index()
    _emit(summary, cfg["format"])
    return EXIT_OK


def cmd_spectra(args, cfg, p: FhnParams, ic: State) -> int:
    currents = np.linspace(args.i_range[0], args.i_range[1], args.points)
    path = harness.export_spectra(p, currents, _target(cfg, "spectra"), cfg["format"])
    print(path)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "hopf": cmd_hopf,
    "bifurcation": cmd_bifurcation,
    "phase": cmd_phase,
    "converge": cmd_converge,
    "check-stability": cmd_check_stability,
    "spectra": cmd_spectra,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_global_logging(args.log_level)
    try:
        cfg = resolve_config(args)
        p = FhnParams(a=cfg["a"], gamma=cfg["gamma"], mu=cfg["mu"], current=cfg["I"])
        ic = State(cfg["v0"], cfg["w0"])
        logger.info(f"🚀 【CLI】{args.command}，参数={p.as_dict()}，ic={ic.as_tuple()}")
        return COMMANDS[args.command](args, cfg, p, ic)
    except (FhnConfigError, ValueError) as e:
        print(f"{parser.prog} {args.command}: 配置错误：{e}", file=sys.stderr)
        return EXIT_USAGE
    except FhnNumericalError as e:
        logger.error(f"❌ 【CLI】{args.command} 数值失败", exc_info=True)
        print(f"{parser.prog} {args.command}: 数值失败：{e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"{parser.prog} {args.command}: 文件读写失败：{e}", file=sys.stderr)
        return EXIT_IO
