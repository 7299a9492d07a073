import copy
import math

import numpy as np
import pytest

from qotlimit.analytic import make_family
from qotlimit.asymptotics import (
    check_bandwidth,
    fit_constant,
    fit_exponent,
    lower_value,
    parse_eps_list,
    read_report_csv,
    sandwich,
    sweep,
    theoretical_limit,
    upper_value,
    write_report_csv,
    write_summary,
)
from qotlimit.barenblatt import constants
from qotlimit.discrete_ot import w2_exact_small
from qotlimit.errors import BandwidthUnderResolved
from qotlimit.qot import solve


def test_theoretical_limit_identity():
    pair = make_family("identity", d=1, n=200)
    assert theoretical_limit(pair) == pytest.approx(1.310371, abs=1e-6)
    assert theoretical_limit(pair, "corrected") == pytest.approx(0.7862224, abs=1e-6)


def test_theoretical_limit_affine():
    pair = make_family("affine", d=1, n=400, A=2.0)
    assert theoretical_limit(pair) == pytest.approx(1.5 ** (2 / 3) * 2 ** (-1 / 3), rel=1e-10)
    assert theoretical_limit(pair) == pytest.approx(1.0400, abs=5e-5)


def test_theoretical_limit_length_scaling():
    pair = make_family("identity", d=1, n=400, lo=0.0, hi=2.0)
    assert theoretical_limit(pair) == pytest.approx(1.5 ** (2 / 3) * 2 ** (2 / 3), rel=1e-10)


def test_theoretical_limit_bad_constant():
    with pytest.raises(ValueError):
        theoretical_limit(make_family("identity", d=1, n=10), "other")


def test_parse_eps_list():
    np.testing.assert_array_equal(parse_eps_list(["1e-2", 1e-3, 1e-4]), [1e-2, 1e-3, 1e-4])
    for bad in ([1e-2, 1e-3], [1e-2, 1e-2, 1e-3], [1e-3, 1e-2, 1e-4], [1e-2, 0.0, -1.0]):
        with pytest.raises(ValueError):
            parse_eps_list(bad)


def test_fit_exponent_power_law():
    eps = np.logspace(-2, -4, 5)
    assert fit_exponent(eps, 3.0 * eps ** 0.6) == pytest.approx(0.6, abs=1e-12)


def test_fit_constant_recovers_limit():
    eps = np.logspace(-2, -4, 6)
    K, gam = fit_constant(eps, 0.8 + 0.5 * (eps / eps[0]) ** 0.4)
    assert K == pytest.approx(0.8, rel=1e-6)
    assert gam == pytest.approx(0.4, rel=1e-4)
    K, gam = fit_constant(eps[:3], np.array([1.0, 0.9, 0.85]))
    assert K == 0.85 and math.isnan(gam)


def test_bandwidth_rule():
    pair = make_family("identity", d=1, n=200)
    assert check_bandwidth(pair, 1e-2) >= 10
    with pytest.raises(BandwidthUnderResolved):
        check_bandwidth(pair, 1e-4)
    with pytest.raises(BandwidthUnderResolved):
        sweep(pair, [1e-2, 1e-3, 1e-4])


def test_cost_scaling_law(rng):
    # T_{k^2 eps} on k-scaled points equals k^2 T_eps with the same plan
    x = rng.uniform(size=(50, 2))
    y = rng.uniform(size=(50, 2))
    w = np.full(50, 1 / 50)
    kappa = 3.0
    eps_list = np.array([3e-2, 1e-2, 3e-3, 1e-3])
    w2 = w2_exact_small((x, w), (y, w)).value
    gaps, gaps_k = [], []
    for eps in eps_list:
        a = solve((x, w), (y, w), eps, tol=1e-12)
        b = solve((kappa * x, w), (kappa * y, w), kappa ** 2 * eps, tol=1e-12)
        assert b.value == pytest.approx(kappa ** 2 * a.value, rel=1e-10)
        np.testing.assert_allclose(b.coupling.to_dense(), a.coupling.to_dense(), atol=1e-8)
        gaps.append(a.value - w2)
        gaps_k.append(b.value - kappa ** 2 * w2)
    e1 = fit_exponent(eps_list, np.array(gaps))
    e2 = fit_exponent(kappa ** 2 * eps_list, np.array(gaps_k))
    assert e1 == pytest.approx(e2, abs=0.01)


def test_sweep_report_fields(identity_sweep_1d):
    rep = identity_sweep_1d
    assert np.all(rep.gaps > 0)
    assert np.all(np.diff(rep.gaps) < 0)
    assert np.all(rep.row_defects <= 1e-8)
    assert np.all(np.abs(rep.duality_gaps) <= 1e-6)
    assert rep.fitted_exponent == pytest.approx(2 / 3, abs=0.03)
    assert rep.fitted_constant == pytest.approx(rep.corrected_constant, rel=0.02)


def _tail(report, k):
    # at eps = 1e-2 the kernel is wider than a 0.05 frame, so drop the head
    rep = copy.deepcopy(report)
    for name in ("eps_list", "gaps", "scaled_gaps", "values", "support_fractions",
                 "iterations", "row_defects", "duality_gaps"):
        setattr(rep, name, getattr(rep, name)[k:])
    return rep


@pytest.fixture(scope="module")
def sandwich_report(identity_1d, identity_sweep_1d):
    import warnings

    rep = _tail(identity_sweep_1d, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return sandwich(identity_1d, 0.05, rep.eps_list, support_check="warn", report=rep)


def test_sandwich_ordering(sandwich_report):
    rep = sandwich_report
    slack = 1e-6
    assert np.all(rep.lower_curve <= rep.scaled_gaps + slack)
    assert np.all(rep.scaled_gaps <= rep.upper_curve + slack)
    assert rep.extra["glass_marginal_defect"] <= 1e-3


@pytest.mark.xfail(strict=True, reason="the dual candidate approaches the limit from above, "
                   "so its scaled value falls rather than rises")
def test_lower_curve_increases(sandwich_report):
    low = sandwich_report.lower_curve
    assert np.all(np.diff(low) >= -0.01 * np.abs(low[:-1]))


def test_lower_curve_approaches_limit(sandwich_report):
    low = sandwich_report.lower_curve
    dist = np.abs(low - sandwich_report.corrected_constant)
    assert np.all(np.diff(dist) < 0)


def test_gap_shrinks_with_delta(identity_1d):
    import warnings

    lo = lower_value(identity_1d, 1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        up_wide, _ = upper_value(identity_1d, 1e-4, 0.1, support_check="warn")
        up_thin, _ = upper_value(identity_1d, 1e-4, 0.05, support_check="warn")
    assert 0 < up_thin - lo < up_wide - lo


def test_report_csv_round_trip(identity_sweep_1d, tmp_path):
    rep = identity_sweep_1d
    path = tmp_path / "report.csv"
    write_report_csv(rep, path, ["run a", "config d = 1"])
    text = path.read_text().splitlines()
    assert text[0] == "# run a"
    cols = read_report_csv(path)
    np.testing.assert_array_equal(cols["eps"], rep.eps_list)
    np.testing.assert_array_equal(cols["scaled_gap"], rep.scaled_gaps)
    assert np.all(np.isnan(cols["lower"]))
    write_summary(rep, tmp_path / "summary.txt")
    kv = dict(line.split(" = ") for line in (tmp_path / "summary.txt").read_text().splitlines())
    assert float(kv["fitted_exponent"]) == rep.fitted_exponent
    assert float(kv["corrected_constant"]) == pytest.approx(constants(1).corrected_constant)
