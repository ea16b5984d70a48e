"""criticality 模块测试"""
import numpy as np
import pytest

from src.criticality import (
    FsCurve,
    build_scaling_report,
    collapse_score,
    critical_hopping,
    default_window,
    fit_mu,
    fs_evaluator,
    locate_peak,
    mean_field,
    nu_from_mu,
    refine_peak,
    rescale_rows,
    scan_nu,
)
from src.eigensolve import LanczosConfig
from src.fidelity import FsPoint
from src.utils.grid_utils import GridParser

ETAS = [1100.0, 1200.0, 1300.0, 1400.0, 1500.0]


def synthetic_evaluator(chi):
    def evaluate(js):
        return [FsPoint(j=float(j), chi_f=float(chi(j)), delta_j=1e-5, fidelity=1.0) for j in js]
    return evaluate


def lorentzian(j):
    return 1.0 / ((j - 0.3) ** 2 + 1e-6)


def scaling_family(eta: float, js) -> FsCurve:
    """χ_F = η^{4/3} / (1 + (η^{2/3}(J − 0.3))²)，ν = 3/2 时严格塌缩"""
    points = [FsPoint(j=float(j), chi_f=eta ** (4 / 3) / (1 + (eta ** (2 / 3) * (j - 0.3)) ** 2),
                      delta_j=1e-5, fidelity=1.0) for j in js]
    return FsCurve(g=0.7, eta=eta, n_cut=80, delta_j=1e-5, points=points,
                   j_max=0.3, chi_max=eta ** (4 / 3))


@pytest.fixture
def family():
    js = np.linspace(0.29, 0.31, 401)
    return [scaling_family(eta, js) for eta in ETAS]


def test_critical_hopping_values():
    assert mean_field(0.5, 0.1).jc == 0.375
    assert critical_hopping(1.0) == 0.0
    result = mean_field(0.0, 0.0)
    assert result.lambda_plus == 1.0 and result.lambda_minus == 1.0


@pytest.mark.parametrize("g", [0.0, 0.3, 0.5, 0.7, 0.9, 1.0])
def test_boundary_is_soft_mode(g):
    result = mean_field(g, critical_hopping(g))
    assert result.lambda_minus == pytest.approx(0.0, abs=1e-15)
    assert result.lambda_minus <= result.lambda_plus
    assert result.phase == 'critical'


def test_phases():
    assert mean_field(0.7, 0.1).phase == 'normal'
    assert mean_field(0.7, 0.4).phase == 'superradiant'
    with pytest.raises(ValueError):
        mean_field(-0.1, 0.1)
    with pytest.raises(ValueError):
        mean_field(0.5, -0.1)


@pytest.mark.parametrize("g, j", [(0.5, 0.1), (0.7, 0.3), (0.9, 0.05)])
def test_landscape_hessian_matches_stability_matrix(g, j):
    result = mean_field(g, j)
    h = 1e-4
    e = result.e_minus
    d_ll = (e(h, 0.0) - 2 * e(0.0, 0.0) + e(-h, 0.0)) / h ** 2
    d_rr = (e(0.0, h) - 2 * e(0.0, 0.0) + e(0.0, -h)) / h ** 2
    d_lr = (e(h, h) - e(h, -h) - e(-h, h) + e(-h, -h)) / (4 * h ** 2)
    np.testing.assert_allclose([[d_ll, d_lr], [d_lr, d_rr]], result.stability_matrix(), atol=1e-6)
    eigen = np.linalg.eigvalsh(result.stability_matrix())
    np.testing.assert_allclose(eigen, [result.lambda_minus, result.lambda_plus], atol=1e-12)


def test_landscape_accepts_arrays():
    result = mean_field(0.7, 0.2)
    x = np.linspace(-1, 1, 5)
    grid = result.e_minus(x[:, None], x[None, :])
    assert grid.shape == (5, 5)
    assert np.all(result.e_plus(x, x) > result.e_minus(x, x))


def test_default_window():
    lo, hi = default_window(0.7)
    assert lo == pytest.approx(0.6 * 0.255)
    assert hi == pytest.approx(1.4 * 0.255)
    with pytest.raises(ValueError):
        default_window(1.0)


def test_locate_synthetic_peak():
    curve = locate_peak(0.7, 1500.0, 80, 1e-5, j_window=(0.2, 0.4),
                        evaluator=synthetic_evaluator(lorentzian))
    assert curve.j_max == pytest.approx(0.3, abs=1e-6)
    assert curve.chi_max == pytest.approx(1e6, rel=1e-6)
    assert np.all(np.diff(curve.js) > 0)
    assert not curve.edge_widened and not curve.multimodal
    assert curve.chi_max >= curve.chis.max()


def test_refinement_is_idempotent():
    curve = locate_peak(0.7, 1500.0, 80, 1e-5, j_window=(0.2, 0.4),
                        evaluator=synthetic_evaluator(lorentzian))
    again, _ = refine_peak(lorentzian, curve.j_max - 1e-4, curve.j_max + 1e-4)
    assert abs(again - curve.j_max) < 1e-6


def test_peak_at_window_edge_widens(capsys):
    curve = locate_peak(0.7, 1500.0, 80, 1e-5, j_window=(0.1, 0.2),
                        evaluator=synthetic_evaluator(lorentzian))
    assert curve.edge_widened
    assert curve.window[1] > 0.3
    assert curve.j_max == pytest.approx(0.3, abs=1e-6)
    assert "警告" in capsys.readouterr().out


def test_multiple_maxima_flagged(capsys):
    def two_peaks(j):
        return 1.0 / (1 + ((j - 0.25) / 0.01) ** 2) + 2.0 / (1 + ((j - 0.35) / 0.01) ** 2)

    curve = locate_peak(0.7, 1500.0, 80, 1e-5, j_window=(0.2, 0.4),
                        evaluator=synthetic_evaluator(two_peaks))
    assert curve.multimodal
    assert len(curve.local_maxima) == 2
    assert curve.j_max == pytest.approx(0.35, abs=1e-3)
    assert "多个局部极大值" in capsys.readouterr().out


def test_failed_points_are_skipped():
    def evaluate(js):
        return [FsPoint(j=float(j), chi_f=float('nan') if j < 0.22 else lorentzian(j),
                        delta_j=1e-5, fidelity=1.0) for j in js]

    curve = locate_peak(0.7, 1500.0, 80, 1e-5, j_window=(0.2, 0.4), evaluator=evaluate)
    assert curve.j_max == pytest.approx(0.3, abs=1e-6)
    assert np.all(np.isfinite(curve.chis))


def test_parallel_evaluator_matches_serial():
    cfg = LanczosConfig(max_iter=200, tol=1e-12, seed=3, sector=1)
    js = [0.1, 0.15, 0.2]
    serial = fs_evaluator(0.7, 20.0, 3, 1e-4, cfg)(js)
    parallel = fs_evaluator(0.7, 20.0, 3, 1e-4, cfg, workers=2)(js)
    assert [p.j for p in parallel] == js
    assert [p.chi_f for p in parallel] == [p.chi_f for p in serial]
    with pytest.raises(ValueError):
        fs_evaluator(0.7, 20.0, 3, 1e-4, cfg, workers=0)


def test_locate_peak_rejects_bad_grid():
    with pytest.raises(ValueError):
        locate_peak(0.7, 1500.0, 80, 1e-5, j_window=(0.4, 0.2), evaluator=synthetic_evaluator(lorentzian))
    with pytest.raises(ValueError):
        locate_peak(0.7, 1500.0, 80, 1e-5, j_window=(0.2, 0.4), n_grid=2,
                    evaluator=synthetic_evaluator(lorentzian))


def test_fit_exact_power_law():
    mu, stderr = fit_mu([(eta, 7.0 * eta ** (4 / 3)) for eta in ETAS])
    assert mu == pytest.approx(4 / 3, abs=1e-10)
    assert stderr < 1e-8


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_mu([(1100.0, 1.0), (1200.0, 2.0)])
    with pytest.raises(ValueError):
        fit_mu([(1100.0, 1.0), (1200.0, -2.0), (1300.0, 3.0)])


def test_nu_error_propagation():
    nu, nu_err = nu_from_mu(4 / 3, 0.01)
    assert nu == pytest.approx(1.5)
    assert nu_err == pytest.approx(2 * 0.01 / (4 / 3) ** 2)
    with pytest.raises(ValueError):
        nu_from_mu(0.0)


def test_identical_curves_collapse_exactly(family):
    assert collapse_score([family[0], family[0]], 1.0) == 0.0


def test_synthetic_family_collapses_at_three_halves(family):
    best = collapse_score(family, 1.5)
    assert best < 1e-4
    assert collapse_score(family, 1.0) > 100 * best
    assert collapse_score(family, 2.0) > 100 * best


def test_nu_scan_finds_three_halves(family):
    nus = GridParser.parse_values("1.0:2.0:0.05")
    best, scores = scan_nu(family, nus)
    assert best == pytest.approx(1.5)
    assert len(scores) == 21


def test_collapse_needs_overlap():
    left = FsCurve(0.7, 100.0, 10, 1e-5,
                   [FsPoint(j, 1.0 + j, 1e-5, 1.0) for j in (0.0, 0.1, 0.2)], j_max=0.1, chi_max=1.1)
    right = FsCurve(0.7, 100.0, 10, 1e-5,
                    [FsPoint(j, 1.0 + j, 1e-5, 1.0) for j in (0.5, 0.6, 0.7)], j_max=0.1, chi_max=1.7)
    with pytest.raises(ValueError):
        collapse_score([left, right], 1.5)
    with pytest.raises(ValueError):
        collapse_score([left], 1.5)


def test_rescale_rows(family):
    rows = rescale_rows(family[:2], 1.5)
    assert len(rows) == 802
    g, eta, nu, u, y = rows[200]
    assert (g, eta, nu) == (0.7, 1100.0, 1.5)
    assert u == pytest.approx(0.0, abs=1e-9)
    assert y == pytest.approx(0.0, abs=1e-12)


def test_scaling_report(family):
    report = build_scaling_report(0.7, family)
    assert report.mu == pytest.approx(4 / 3, abs=1e-10)
    assert report.nu == pytest.approx(1.5, abs=1e-9)
    assert report.collapse_score_theory < 1e-4
    assert report.jc == pytest.approx(0.255)
    assert report.etas == ETAS
    assert report.to_dict()['nu'] == report.nu
