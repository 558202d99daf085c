import json
import math

import numpy as np
import pandas as pd
import pytest

from core import collocation
from core import harness as hz
from core.exceptions import FhnConfigError, NoConvergence
from core.fhn_model import FhnParams, State
from core.log_config import get_logger

# 使用封装的 get_logger
logger = get_logger(__name__)

SHORT_TIMES = np.linspace(0.0, 0.05, 11)


@pytest.fixture(scope="module")
def p06():
    return FhnParams.baseline(0.6)


@pytest.fixture(scope="module")
def short_table(p06):
    cfg = hz.RunConfig(params=p06, ic=State.baseline(), horizon=0.05, method="taylor", degree=4, tol=1e-11,
                       sample_times=SHORT_TIMES)
    return hz.build_convergence_table(cfg, [4, 5, 6, 8])


# ==================== RunConfig ====================
def test_default_sample_times():
    times = hz.default_sample_times(1.0)
    assert len(times) == 11
    assert times[0] == 0.0 and times[-1] == 1.0
    assert times[3] == pytest.approx(0.3)


@pytest.mark.parametrize("kwargs, keyword", [
    ({"horizon": 0.0}, "horizon"),
    ({"horizon": 1.0, "method": "rk45"}, "method"),
    ({"horizon": 1.0, "method": "euler"}, "tau"),
    ({"horizon": 1.0, "method": "euler", "tau": -1.0}, "tau"),
    ({"horizon": 1.0, "method": "taylor"}, "N"),
    ({"horizon": 1.0, "method": "taylor-piecewise", "degree": 4}, "n_sub"),
    ({"horizon": 1.0, "method": "reference", "fmt": "xml"}, "format"),
    ({"horizon": 1.0, "method": "reference", "sample_times": [0.0, 2.0]}, "1.0"),
])
def test_run_config_validation(baseline_ic, kwargs, keyword):
    with pytest.raises(FhnConfigError) as exc_info:
        hz.RunConfig(params=FhnParams.baseline(), ic=baseline_ic, **kwargs)
    assert keyword in str(exc_info.value)


def test_run_method_euler_and_reference_agree(p06):
    times = np.linspace(0.0, 1.0, 11)
    euler, cpu = hz.run_method(hz.RunConfig(params=p06, ic=State.baseline(), horizon=1.0, method="euler",
                                            tau=0.00025, sample_times=times))
    ref, _ = hz.run_method(hz.RunConfig(params=p06, ic=State.baseline(), horizon=1.0, method="reference",
                                        sample_times=times))
    assert cpu >= 0.0
    assert (euler.v[0], euler.w[0]) == (0.0, -0.2)
    assert np.max(np.abs(euler.v - ref.v)) < 0.1


def test_euler_rejects_off_grid_samples(p06):
    cfg = hz.RunConfig(params=p06, ic=State.baseline(), horizon=1.0, method="euler", tau=0.25,
                       sample_times=[0.0, 0.5, 0.6])
    with pytest.raises(FhnConfigError):
        hz.run_method(cfg)


# ==================== 收敛表 ====================
def test_convergence_table_structure(short_table):
    assert short_table.degrees == [4, 5, 6, 8]
    assert short_table.err_v.shape == (4, 11)
    assert short_table.err_w.shape == (4, 11)
    assert not any(short_table.failed)
    assert np.all(short_table.err_v >= 0) and np.all(short_table.err_w >= 0)
    assert all(c is not None and c >= 0 for c in short_table.cpu)
    # t=0 处初值精确
    assert short_table.err_v[:, 0].tolist() == [0.0] * 4


def test_convergence_table_improves_with_degree(short_table):
    linf = short_table.row_max("v")
    logger.info(f"📊 收敛表 L∞(v)：{dict(zip(short_table.degrees, linf))}")
    assert linf[-1] < linf[0]


def test_convergence_table_files(short_table, tmp_out):
    paths = hz.write_convergence_table(short_table, tmp_out)
    assert [p.name for p in paths] == ["err_v.csv", "err_w.csv", "cpu.csv"]
    assert paths[0].read_text(encoding="utf-8").splitlines()[0] == "t,err_N4,err_N5,err_N6,err_N8"
    assert paths[2].read_text(encoding="utf-8").splitlines()[0] == "N,seconds"
    back = hz.read_frame(paths[0])
    assert np.array_equal(back["err_N6"].to_numpy(), short_table.err_v[2])


def test_convergence_table_empty_degrees(p06):
    cfg = hz.RunConfig(params=p06, ic=State.baseline(), horizon=0.05, method="taylor", degree=4)
    table = hz.build_convergence_table(cfg, [])
    assert table.degrees == [] and table.err_v.shape == (0, len(cfg.sample_times))
    assert list(table.frame("v").columns) == ["t"]


def test_convergence_table_marks_failed_rows(p06, monkeypatch, tmp_out):
    def refuse(*args, **kwargs):
        raise NoConvergence(100, 1.0)

    monkeypatch.setattr(collocation, "solve", refuse)
    cfg = hz.RunConfig(params=p06, ic=State.baseline(), horizon=0.05, method="taylor", degree=4,
                       sample_times=SHORT_TIMES)
    table = hz.build_convergence_table(cfg, [4])
    assert table.failed == [True]
    assert table.cpu == [None]
    assert np.all(np.isnan(table.err_v))
    cpu_csv = hz.write_convergence_table(table, tmp_out)[2]
    assert cpu_csv.read_text(encoding="utf-8").splitlines() == ["N,seconds", "4,"]


def test_convergence_table_requires_taylor(p06):
    cfg = hz.RunConfig(params=p06, ic=State.baseline(), horizon=1.0, method="euler", tau=1e-3)
    with pytest.raises(FhnConfigError):
        hz.build_convergence_table(cfg)


@pytest.mark.slow
def test_piecewise_table_baseline_configuration(p06):
    """
    [0,1]、n_sub=500（h=0.002，h·|lambda_fast| < 1）：t>0 的每个采样时刻上误差随 N 严格下降。
    n_sub=200 时 h·|lambda_fast| 约为 1.9，仍处于刚性预渐近区，N=6 的误差可能反超 N=5
    """
    cfg = hz.RunConfig(params=p06, ic=State.baseline(), horizon=1.0, method="taylor-piecewise", degree=4, n_sub=500)
    table = hz.build_convergence_table(cfg, [4, 5, 6])
    assert not any(table.failed)
    positive = table.sample_times > 0
    for errs in (table.err_v, table.err_w):
        assert np.all(errs[:, ~positive] <= 1e-12)
        for row in range(2):
            assert np.all(errs[row + 1, positive] < errs[row, positive]), f"N={table.degrees[row + 1]}"
    assert table.row_max("v")[0] <= 1e-3


@pytest.mark.slow
def test_piecewise_table_coarse_subdivision(p06):
    """n_sub=200 时 N=4 的 L∞ 误差 <= 1e-3，各行均收敛"""
    cfg = hz.RunConfig(params=p06, ic=State.baseline(), horizon=1.0, method="taylor-piecewise", degree=4, n_sub=200)
    table = hz.build_convergence_table(cfg, [4, 5, 6])
    assert not any(table.failed)
    assert table.row_max("v")[0] <= 1e-3


# ==================== tau 扫描 ====================
@pytest.mark.slow
def test_tau_sweep_first_order(p06):
    sweep = hz.tau_sweep(p06, State.baseline(), 1.0, [1e-3, 5e-4, 2.5e-4, 1.25e-4])
    assert sweep.taus == [1e-3, 5e-4, 2.5e-4, 1.25e-4]
    assert all(b < a for a, b in zip(sweep.errors, sweep.errors[1:]))
    assert all(0.7 <= order <= 1.3 for order in sweep.orders)
    assert sweep.constant > 0
    assert len(sweep.l2_errors) == 4
    assert all(b < a for a, b in zip(sweep.l2_errors, sweep.l2_errors[1:]))
    # ||e||_{2tau} <= sqrt((T + tau) * 2) * max(|ev|, |ew|)
    assert all(l2 <= e * math.sqrt(2.0 * 1.001) for l2, e in zip(sweep.l2_errors, sweep.errors))


def test_tau_sweep_needs_two_steps(p06):
    with pytest.raises(FhnConfigError):
        hz.tau_sweep(p06, State.baseline(), 1.0, [1e-3])


# ==================== Taylor 误差界辅助 ====================
def test_series_coefficients_first_terms(p06):
    v, w = hz.series_coefficients(p06, State.baseline(), 3)
    assert (v[0], w[0]) == (0.0, -0.2)
    assert v[1] == pytest.approx(100.0)
    assert w[1] == pytest.approx(0.236)
    # v'' = (f'(v) v' - w') / mu
    assert 2 * v[2] == pytest.approx((-0.22 * 100.0 - 0.236) / 0.008)


def test_center_errors_vanish_for_exact_series(p06):
    v, w = hz.series_coefficients(p06, State.baseline(), 4)
    sol = collocation.TaylorSolution(grid=collocation.make_grid(0.0, 0.01, 4), center=0.0, coeff_v=v, coeff_w=w,
                                     newton_iters=0, residual_norm=0.0, ic=State.baseline())
    assert not np.any(hz.estimate_center_errors(sol, p06))


def test_center_errors_require_ic_center(p06):
    v, w = hz.series_coefficients(p06, State.baseline(), 4)
    sol = collocation.TaylorSolution(grid=collocation.make_grid(0.0, 0.01, 4), center=0.005, coeff_v=v,
                                     coeff_w=w, newton_iters=0, residual_norm=0.0, ic=State.baseline())
    with pytest.raises(FhnConfigError):
        hz.estimate_center_errors(sol, p06)


def test_derivative_bound_estimate(p06, baseline_params):
    assert hz.estimate_derivative_bound(baseline_params, State(0.0, 0.0), 0.0, 0.05, 5) == 0.0
    first = hz.estimate_derivative_bound(p06, State.baseline(), 0.0, 0.01, 1, safety=1.0)
    assert first == pytest.approx(100.0, rel=0.25)
    with pytest.raises(FhnConfigError):
        hz.estimate_derivative_bound(p06, State.baseline(), 0.0, 0.05, 5, n_samples=6)


# ==================== 文件输出 ====================
def test_csv_round_trip_is_bit_exact(tmp_out):
    rng = np.random.default_rng(7)
    frame = pd.DataFrame({"t": rng.uniform(size=50), "v": rng.normal(size=50) * 1e-7,
                          "w": rng.normal(size=50) * 1e5})
    back = hz.read_frame(hz.write_frame(frame, tmp_out / "rt.csv"))
    for col in frame.columns:
        assert np.array_equal(back[col].to_numpy(), frame[col].to_numpy())


def test_json_mirrors_csv(tmp_out):
    frame = pd.DataFrame({"t": [0.0, 0.1], "v": [1 / 3, np.nan], "w": [2.0, -1e-300]})
    csv_path = hz.write_frame(frame, tmp_out / "m.csv", "csv")
    json_path = hz.write_frame(frame, tmp_out / "m.csv", "json")
    assert json_path.suffix == ".json"
    records = json.loads(json_path.read_text(encoding="utf-8"))
    assert records[1]["v"] is None
    back_csv = hz.read_frame(csv_path)
    assert [r["v"] for r in records][0] == back_csv["v"][0]
    assert [r["w"] for r in records] == back_csv["w"].tolist()


def test_export_phase_portrait(tmp_out, numeric_assert):
    p = FhnParams.baseline(0.05)
    times = np.linspace(0.0, 0.5, 51)
    traj = hz.reference_solve(p, State.baseline(), 0.5, times)
    path = hz.export_phase_portrait(p, [traj], (-0.4, 1.2), tmp_out / "phase.csv")
    frame = hz.read_frame(path)
    assert list(frame.columns) == ["kind", "t", "v", "w"]
    counts = frame["kind"].value_counts().to_dict()
    assert counts == {"trajectory": 51, "v-nullcline": 1001, "w-nullcline": 1001, "equilibrium": 1, "ic": 1}
    eq = frame[frame["kind"] == "equilibrium"].iloc[0]
    numeric_assert(eq, "equilibrium row").assert_close(0.0495, abs_tol=5e-4, field="v") \
        .assert_close(0.042, abs_tol=5e-4, field="w")
    for kind in ("v-nullcline", "w-nullcline"):
        curve = frame[frame["kind"] == kind]
        gaps = np.hypot(curve["v"] - eq["v"], curve["w"] - eq["w"])
        assert gaps.min() <= 1e-6
        assert curve["t"].isna().all()
    assert frame[frame["kind"] == "trajectory"]["t"].is_monotonic_increasing


def test_export_trajectory(tmp_out):
    traj = hz.SampledTrajectory(times=np.array([0.0, 0.5]), v=np.array([0.0, 0.1]), w=np.array([-0.2, 0.3]))
    path = hz.export_trajectory(traj, tmp_out / "traj", "json")
    assert path.name == "traj.json"
    assert json.loads(path.read_text(encoding="utf-8"))[1] == {"t": 0.5, "v": 0.1, "w": 0.3}


def test_export_bifurcation_validation(baseline_params, tmp_out):
    with pytest.raises(FhnConfigError):
        hz.export_bifurcation(baseline_params, 0.0, 1.0, 1, tmp_out / "b.csv")
    with pytest.raises(FhnConfigError):
        hz.export_bifurcation(baseline_params, 1.0, 0.0, 10, tmp_out / "b.csv")


def test_export_bifurcation_stable_window_is_deterministic(baseline_params, tmp_out):
    first = hz.export_bifurcation(baseline_params, 0.6, 1.0, 5, tmp_out / "b1.csv")
    second = hz.export_bifurcation(baseline_params, 0.6, 1.0, 5, tmp_out / "b2.csv")
    assert first.read_bytes() == second.read_bytes()
    lines = first.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "I,v_star,stable,re_l1,re_l2,im_l1,lc_min,lc_max"
    assert all(line.endswith(",,") for line in lines[1:])


@pytest.mark.slow
def test_export_bifurcation_full_scan(baseline_params, tmp_out):
    sim = hz.stability.ScanSimConfig(method="euler", tau=1e-4, horizon=2.0)
    frame = hz.read_frame(hz.export_bifurcation(baseline_params, 0.0, 1.0, 200, tmp_out / "bif.csv", sim_cfg=sim))
    assert len(frame) == 200
    assert (frame[frame["I"] < 0.1]["stable"] == 1).all()
    assert (frame[(frame["I"] > 0.105) & (frame["I"] < 0.49)]["stable"] == 0).all()
    assert (frame[frame["I"] > 0.5]["stable"] == 1).all()
    assert ((frame["re_l1"] > 0) == (frame["stable"] == 0)).all()
    assert (frame["lc_min"].isna() == (frame["stable"] == 1)).all()


def test_export_spectra(baseline_params, tmp_out):
    frame = hz.read_frame(hz.export_spectra(baseline_params, [0.05, 0.2, 0.6], tmp_out / "spectra.csv"))
    assert frame["stability"].tolist() == ["StableSpiral", "UnstableNode", "StableNode"]
    assert frame["im_l1"][0] == pytest.approx(-frame["im_l2"][0])
