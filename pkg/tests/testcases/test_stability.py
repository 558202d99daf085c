import math

import numpy as np
import pytest
from scipy.optimize import brentq

from core.data_utils import parse_yaml_to_params
from core.exceptions import EmptyBracket, InvalidInterval
from core.fhn_model import FhnParams, cubic, nullcline_v, nullcline_w, rest_state_roots, rhs_components
from core.log_config import get_logger
from core.stability import (
    BranchPoint, EigenPair, EquilibriumReport, Jacobian2, ScanSimConfig, StabilityClass, bifurcation_scan, classify,
    eigenvalues, equilibrium_spectra, find_equilibria, find_hopf, jacobian_at, nullclines,
)

# 使用封装的 get_logger
logger = get_logger(__name__)

eq_names, eq_values, eq_ids = parse_yaml_to_params("fhn_cases.yaml", "equilibrium_cases")
hopf_names, hopf_values, hopf_ids = parse_yaml_to_params("fhn_cases.yaml", "hopf_cases")


@pytest.mark.parametrize(eq_names, eq_values, ids=eq_ids)
def test_equilibria_from_yaml(baseline_params, numeric_assert, current, assert_config):
    """平衡点位置与分类（yaml 参数化，链式断言）"""
    reports = find_equilibria(baseline_params.with_current(current))
    numeric_assert(reports, f"equilibria I={current}").assert_from_config(assert_config)


@pytest.mark.parametrize(hopf_names, hopf_values, ids=hopf_ids)
def test_hopf_from_yaml(baseline_params, numeric_assert, i_lo, i_hi, assert_config):
    points = find_hopf(baseline_params, i_lo, i_hi)
    numeric_assert(points, f"hopf [{i_lo},{i_hi}]").assert_from_config(assert_config)


def test_equilibria_lie_on_both_nullclines(baseline_params):
    for current in np.linspace(0.0, 1.0, 21):
        p = baseline_params.with_current(float(current))
        for r in find_equilibria(p):
            assert cubic(r.v_star, p.a) - r.w_star + p.current == pytest.approx(0.0, abs=1e-12)
            assert r.v_star - p.gamma * r.w_star == pytest.approx(0.0, abs=1e-15)


def test_bistable_three_equilibria_with_saddle():
    p = FhnParams(a=0.1, gamma=100.0, mu=0.01)
    reports = find_equilibria(p)
    assert len(reports) == 3
    assert [r.stability for r in reports].count(StabilityClass.SADDLE) == 1
    assert reports[1].stability is StabilityClass.SADDLE
    assert all(r.multiplicity == 1 for r in reports)


def test_bistable_equilibria_match_closed_form(caplog):
    """I=0 且 gamma(1-a)^2 > 4：三个平衡点与解析解一致到 1e-10"""
    p = FhnParams(a=0.1, gamma=100.0, mu=0.008)
    assert p.gamma * (1 - p.a) ** 2 > 4
    expected = rest_state_roots(p)
    found = [r.v_star for r in find_equilibria(p)]
    assert len(found) == len(expected) == 3
    for v, v_exact in zip(found, expected):
        assert abs(v - v_exact) <= 1e-10
    assert "不一致" not in caplog.text


def test_equilibrium_matches_nullcline_bisection(baseline_params):
    """单平衡点时，与零倾线交点的二分求根结果一致"""
    for current in (0.05, 0.3, 0.6, 1.0):
        p = baseline_params.with_current(current)
        reports = find_equilibria(p)
        assert len(reports) == 1
        v_cross = brentq(lambda v: nullcline_v(v, p) - nullcline_w(v, p), -1.0, 2.0, xtol=1e-14, rtol=1e-15)
        assert abs(reports[0].v_star - v_cross) <= 1e-10
        assert abs(reports[0].w_star - nullcline_w(v_cross, p)) <= 1e-10


def test_jacobian_entries(baseline_params):
    jac = jacobian_at(baseline_params, 0.0)
    assert jac.m11 == pytest.approx(-0.22 / 0.008)
    assert jac.m12 == pytest.approx(-125.0)
    assert (jac.m21, jac.m22) == (1.0, -1.18)
    assert jac.as_array().shape == (2, 2)


@pytest.mark.parametrize("v_star", [0.8141, 0.0, 0.3])
def test_jacobian_matches_finite_difference(v_star):
    """M 与右端函数的中心差分一致"""
    p = FhnParams.baseline(0.6)
    w_star = v_star / p.gamma
    h = 1e-6
    jac = jacobian_at(p, v_star)
    dv_plus, dw_plus = rhs_components(v_star + h, w_star, p)
    dv_minus, dw_minus = rhs_components(v_star - h, w_star, p)
    assert (dv_plus - dv_minus) / (2 * h) == pytest.approx(jac.m11, rel=1e-6, abs=1e-6)
    assert (dw_plus - dw_minus) / (2 * h) == pytest.approx(jac.m21, rel=1e-6)
    dv_plus, dw_plus = rhs_components(v_star, w_star + h, p)
    dv_minus, dw_minus = rhs_components(v_star, w_star - h, p)
    assert (dv_plus - dv_minus) / (2 * h) == pytest.approx(jac.m12, rel=1e-6)
    assert (dw_plus - dw_minus) / (2 * h) == pytest.approx(jac.m22, rel=1e-6)


def test_eigenvalues_satisfy_trace_and_det(baseline_params):
    for v in (0.0, 0.1, 0.24, 0.5, 0.8141):
        jac = jacobian_at(baseline_params, v)
        e = eigenvalues(jac)
        assert e.trace == pytest.approx(jac.trace, rel=1e-12, abs=1e-12)
        assert e.det == pytest.approx(jac.det, rel=1e-10)
        ref = np.sort_complex(np.linalg.eigvals(jac.as_array()))
        got = np.sort_complex(np.array([e.lambda1, e.lambda2]))
        assert np.allclose(got, ref, rtol=1e-9, atol=1e-9)


def test_stable_node_eigenvalues_at_i06(baseline_params):
    """I=0.6：两个负实特征值 ≈ -7.3, -21.6"""
    r = find_equilibria(baseline_params.with_current(0.6))[0]
    assert r.eigen.lambda1.imag == 0.0 and r.eigen.lambda2.imag == 0.0
    assert r.eigen.lambda1.real == pytest.approx(-7.3, abs=0.1)
    assert r.eigen.lambda2.real == pytest.approx(-21.6, abs=0.1)
    assert r.stable


@pytest.mark.parametrize("pair, expected", [
    ((complex(-1, 0), complex(-2, 0)), StabilityClass.STABLE_NODE),
    ((complex(-1, 2), complex(-1, -2)), StabilityClass.STABLE_SPIRAL),
    ((complex(2, 0), complex(1, 0)), StabilityClass.UNSTABLE_NODE),
    ((complex(1, 2), complex(1, -2)), StabilityClass.UNSTABLE_SPIRAL),
    ((complex(1, 0), complex(-2, 0)), StabilityClass.SADDLE),
    ((complex(0, 11.12), complex(0, -11.12)), StabilityClass.MARGINAL),
    ((complex(4e-9, 3), complex(4e-9, -3)), StabilityClass.MARGINAL),
])
def test_classify_table(pair, expected):
    assert classify(EigenPair(*pair)) is expected


@pytest.mark.parametrize("pair", [
    (complex(-1, 2), complex(-1, -2)),
    (complex(1, 0), complex(-2, 0)),
    (complex(3e-9, 11.12), complex(3e-9, -11.12)),
    (complex(0.5, 4), complex(0.5, -4)),
    (complex(-3, 0), complex(-0.5, 0)),
])
def test_classify_invariant_under_conjugation_and_order(pair):
    l1, l2 = pair
    expected = classify(EigenPair(l1, l2))
    assert classify(EigenPair(l1.conjugate(), l2.conjugate())) is expected
    assert classify(EigenPair(l2, l1)) is expected


def test_marginal_report_is_not_stable():
    """Tr 略小于 0 但 |Tr| <= 1e-8：分类为 Marginal，stable 为 False"""
    eig = EigenPair(complex(-5e-9, 3.0), complex(-5e-9, -3.0))
    assert eig.max_real < 0.0
    report = EquilibriumReport(
        v_star=0.0, w_star=0.0, jacobian=Jacobian2(-1e-8, -1.0, 9.0, 0.0), eigen=eig, stability=classify(eig),
    )
    assert report.stability is StabilityClass.MARGINAL
    assert not report.stable


def test_report_at_hopf_current_is_marginal(baseline_params):
    for h in find_hopf(baseline_params, 0.0, 1.0):
        report = find_equilibria(baseline_params.with_current(h.i_crit))[0]
        assert report.stability is StabilityClass.MARGINAL
        assert not report.stable


def test_classify_rejects_nonpositive_tol():
    with pytest.raises(ValueError):
        classify(EigenPair(complex(-1, 0), complex(-2, 0)), tol=0.0)


def test_stability_sequence_along_current(baseline_params):
    """稳定焦点 -> 不稳定 -> 稳定"""
    classes = [find_equilibria(baseline_params.with_current(i))[0].stability for i in (0.05, 0.2, 0.6)]
    assert classes[0] is StabilityClass.STABLE_SPIRAL
    assert not classes[1].is_stable
    assert classes[2].is_stable


def test_hopf_trace_vanishes(baseline_params):
    for h in find_hopf(baseline_params, 0.0, 1.0):
        jac = jacobian_at(baseline_params.with_current(h.i_crit), h.v_star)
        assert abs(jac.trace) <= 1e-8
        assert h.omega_imag == pytest.approx(math.sqrt(jac.det), rel=1e-12)


def test_hopf_first_point_frequency(baseline_params):
    """Hopf 点处 Det = 1/mu - gamma^2"""
    first = find_hopf(baseline_params, 0.0, 1.0)[0]
    assert first.omega_imag == pytest.approx(math.sqrt(125.0 - 1.18 ** 2), abs=1e-6)


def test_hopf_stable_under_grid_refinement(baseline_params):
    """扫描格点加倍，临界电流变化 <= 1e-8"""
    coarse = find_hopf(baseline_params, 0.0, 1.0)
    fine = find_hopf(baseline_params, 0.0, 1.0, n_grid=2000)
    assert len(coarse) == len(fine) == 2
    for a, b in zip(coarse, fine):
        assert abs(a.i_crit - b.i_crit) <= 1e-8
        assert abs(a.omega_imag - b.omega_imag) <= 1e-6


def test_hopf_empty_and_invalid(baseline_params):
    with pytest.raises(EmptyBracket):
        find_hopf(baseline_params, 0.6, 1.0)
    with pytest.raises(InvalidInterval):
        find_hopf(baseline_params, 1.0, 0.0)


def test_equilibrium_spectra_order(baseline_params):
    spectra = equilibrium_spectra(baseline_params, [0.0, 0.3, 0.6])
    assert [c for c, _ in spectra] == [0.0, 0.3, 0.6]


def test_bifurcation_scan_stable_rows_have_no_cycle(baseline_params):
    cfg = ScanSimConfig(method="euler", tau=1e-5, horizon=1.0)
    points = bifurcation_scan(baseline_params, [0.0, 0.05, 0.6, 0.8], cfg)
    assert [bp.current for bp in points] == [0.0, 0.05, 0.6, 0.8]
    for bp in points:
        assert bp.stable
        assert bp.lc_min is None and bp.lc_max is None


@pytest.mark.slow
def test_bifurcation_scan_limit_cycle_amplitude(baseline_params):
    """I=0.3 位于两个 Hopf 点之间：平衡点不稳定，存在大幅极限环"""
    cfg = ScanSimConfig(method="euler", tau=1e-5, horizon=5.0)
    bp = bifurcation_scan(baseline_params, [0.3], cfg)[0]
    assert not bp.stable
    assert bp.lc_min is not None and bp.lc_max is not None
    assert bp.lc_min < bp.v_star < bp.lc_max
    assert bp.lc_max - bp.lc_min > 0.5
    logger.info(f"📊 I=0.3 极限环幅值：[{bp.lc_min:.4f}, {bp.lc_max:.4f}]")


@pytest.mark.slow
def test_bifurcation_scan_unstable_at_i02(baseline_params):
    """I=0.2：平衡点不稳定（Re lambda > 0），给出极限环区间"""
    cfg = ScanSimConfig(method="euler", tau=1e-4, horizon=5.0)
    points = bifurcation_scan(baseline_params, [0.2], cfg)
    assert len(points) == 1
    bp = points[0]
    assert not bp.stable
    assert bp.eigen.max_real > 0.0
    assert not bp.degenerate
    assert bp.lc_min is not None and bp.lc_max is not None
    assert bp.lc_min < bp.lc_max


def test_bifurcation_scan_rejects_bad_grid(baseline_params):
    with pytest.raises(ValueError):
        bifurcation_scan(baseline_params, [])
    with pytest.raises(ValueError):
        bifurcation_scan(baseline_params, [0.5, 0.1])


def test_branch_point_rejects_inverted_cycle():
    e = EigenPair(complex(1, 0), complex(2, 0))
    with pytest.raises(ValueError):
        BranchPoint(current=0.3, v_star=0.3, stable=False, eigen=e, lc_min=1.0, lc_max=0.0)


def test_nullclines_shapes(baseline_params):
    curves = nullclines(baseline_params, np.linspace(-0.5, 1.5, 50))
    assert curves.v_nullcline.shape == (50, 2)
    assert np.allclose(curves.w_nullcline[:, 1], curves.w_nullcline[:, 0] / 1.18)
    with pytest.raises(ValueError):
        nullclines(baseline_params, [])
