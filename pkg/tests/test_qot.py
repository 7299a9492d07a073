import numpy as np
import pytest

from qotlimit.errors import DimensionMismatch, NoConvergence, NotACoupling
from qotlimit.qot import (
    Coupling,
    DualPotentials,
    check_coupling,
    dual_objective,
    primal_objective,
    solve,
    support_fraction,
    write_plan_csv,
    write_stats,
)

from .conftest import BACKENDS, random_instance
from .oracles import double_centred_density, full_cost, qot_qp, toy_2x2


def _grid(n, lo=0.0, hi=1.0):
    x = (lo + (np.arange(n) + 0.5) * (hi - lo) / n)[:, None]
    return x, np.full(n, 1.0 / n)


def test_dual_zero_potentials():
    x, p = _grid(5)
    y, q = _grid(4, 2.0, 3.0)
    pots = DualPotentials(np.zeros(5), np.zeros(4), 0.1)
    assert dual_objective(pots, (x, p), (y, q)) == 0.0


def test_dual_collapsed_toy():
    eps = 0.3
    pt = (np.zeros((1, 1)), np.ones(1))
    pots = DualPotentials(np.array([eps / 2]), np.zeros(1), eps)
    assert dual_objective(pots, pt, pt) == pytest.approx(0.75 * eps, abs=1e-16)


def test_dual_gauge_invariance(rng):
    (x, p), (y, q) = random_instance(rng, 20, 30, 2)
    pots = DualPotentials(rng.normal(0.1, 0.05, 20), rng.normal(0.0, 0.05, 30), 0.02)
    base = dual_objective(pots, (x, p), (y, q))
    assert dual_objective(pots.shifted(0.37), (x, p), (y, q)) == pytest.approx(base,
                                                                               abs=1e-12)


def test_primal_product_coupling(rng):
    (x, p), (y, q) = random_instance(rng, 12, 9, 2)
    eps = 0.4
    plan = Coupling.from_dense(np.ones((12, 9)), eps=eps)
    expected = float(p @ full_cost(x, y) @ q) + eps
    assert primal_objective(plan, (x, p), (y, q)) == pytest.approx(expected, rel=1e-14)
    assert support_fraction(plan) == 1.0


def test_empty_plan_is_not_a_coupling():
    x, p = _grid(3)
    empty = Coupling(np.empty(0, np.intp), np.empty(0, np.intp), np.empty(0), (3, 3), 0.1)
    with pytest.raises(NotACoupling):
        primal_objective(empty, (x, p), (x, p))
    with pytest.raises(NotACoupling):
        check_coupling(empty, (x, p), (x, p), 1e-3)


def test_weak_duality_identity(identity_1d_small):
    pair = identity_1d_small
    sol = solve(pair.rho0, pair.rho1, 1e-3, tol=1e-9)
    primal = primal_objective(sol.coupling, pair.rho0, pair.rho1)
    dual = dual_objective(sol.potentials, pair.rho0, pair.rho1)
    assert dual == pytest.approx(sol.value, abs=1e-14)
    assert primal >= dual - 1e-12
    assert primal - dual <= 1e-6
    assert sol.value > 0  # W2 = 0 for the identity pair
    assert sol.stats.support_fraction < 0.3
    row, col = check_coupling(sol.coupling, pair.rho0, pair.rho1, 1e-9)
    assert max(row, col) <= 1e-9


@pytest.mark.parametrize("L2, eps", [(0.04, 0.1), (0.04, 0.01), (0.04, 0.005), (1.0, 0.3)])
def test_two_point_toy(L2, eps):
    x = np.array([[0.0], [np.sqrt(L2)]])
    w = np.array([0.5, 0.5])
    sol = solve((x, w), (x, w), eps, tol=1e-13)
    assert sol.value == pytest.approx(toy_2x2(L2, eps), abs=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_matches_qp_oracle(seed):
    rng = np.random.default_rng(seed)
    d = 1 + seed % 2
    (x, p), (y, q) = random_instance(rng, 10, 9, d)
    eps = [0.01, 0.003][seed % 2]
    ref, u = qot_qp(x, p, y, q, eps)
    sol = solve((x, p), (y, q), eps, tol=1e-12)
    assert sol.value == pytest.approx(ref, abs=1e-8)
    np.testing.assert_allclose(sol.coupling.to_dense(), u, atol=1e-6)


def test_large_eps_product_limit(rng):
    (x, p), (y, q) = random_instance(rng, 10, 10, 1)
    diam2 = 1.0
    # exact positive solution at eps = diam^2
    sol = solve((x, p), (y, q), diam2, tol=1e-13)
    np.testing.assert_allclose(sol.coupling.to_dense(),
                               double_centred_density(x, p, y, q, diam2), atol=1e-10)
    sol = solve((x, p), (y, q), 1e3 * diam2, tol=1e-13)
    assert np.abs(sol.coupling.to_dense() - 1).max() <= 1e-3


def test_support_fraction_monotone(identity_1d_small):
    pair = identity_1d_small
    fr = [solve(pair.rho0, pair.rho1, e, tol=1e-8, keep_plan=False).stats.support_fraction
          for e in (1e-2, 3e-3, 1e-3, 3e-4)]
    assert all(b <= a + 0.01 for a, b in zip(fr, fr[1:]))


def test_gauge_invariance_of_solve(rng):
    (x, p), (y, q) = random_instance(rng, 40, 35, 2)
    a0 = rng.normal(0, 0.01, 40)
    b0 = rng.normal(0, 0.01, 35)
    s1 = solve((x, p), (y, q), 0.01, tol=1e-11, init=(a0, b0))
    s2 = solve((x, p), (y, q), 0.01, tol=1e-11, init=(a0 + 0.25, b0 - 0.25))
    assert s1.value == pytest.approx(s2.value, abs=1e-10)
    assert s1.stats.primal == pytest.approx(s2.stats.primal, abs=1e-10)


def test_monotone_ascent(rng):
    (x, p), (y, q) = random_instance(rng, 50, 50, 2)
    sol = solve((x, p), (y, q), 0.005, tol=1e-10, track_dual=True)
    hist = np.array(sol.stats.dual_history)
    assert len(hist) == sol.stats.iterations
    assert np.all(np.diff(hist) >= -1e-12)


def test_no_convergence():
    x, p = _grid(200)
    with pytest.raises(NoConvergence) as info:
        solve((x, p), (x, p), 1e-4, tol=1e-12, max_iter=2)
    assert info.value.result is not None
    assert not info.value.result.stats.converged
    sol = solve((x, p), (x, p), 1e-4, tol=1e-12, max_iter=2, strict=False)
    assert not sol.stats.converged and sol.stats.iterations == 2


def test_input_validation():
    x, p = _grid(4)
    with pytest.raises(ValueError):
        solve((x, p), (x, p), 0.0)
    with pytest.raises(ValueError):
        solve((x, p), (x, p), 0.1, tol=0)
    with pytest.raises(DimensionMismatch):
        solve((x, p), (np.zeros((4, 2)), p), 0.1)
    with pytest.raises(DimensionMismatch):
        solve((x, p), (x, p), 0.1, init=(np.zeros(3), np.zeros(4)))
    with pytest.raises(ValueError):
        DualPotentials(np.array([np.nan]), np.zeros(1), 0.1)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="extension not built")
def test_backends_give_same_solution(rng):
    (x, p), (y, q) = random_instance(rng, 120, 100, 2)
    sols = [solve((x, p), (y, q), 3e-3, tol=1e-10, backend=b) for b in BACKENDS]
    assert sols[0].value == pytest.approx(sols[1].value, abs=1e-13)
    assert sols[0].stats.iterations == sols[1].stats.iterations
    assert sols[0].coupling.nnz == sols[1].coupling.nnz
    assert {s.stats.backend for s in sols} == set(BACKENDS)


def test_dense_round_trip(rng):
    u = np.maximum(rng.normal(size=(4, 5)), 0)
    plan = Coupling.from_dense(u, eps=0.1)
    np.testing.assert_array_equal(plan.to_dense(), u)
    assert np.all(plan.values > 0)


def test_exports(tmp_path):
    x, p = _grid(30)
    sol = solve((x, p), (x, p), 1e-2, tol=1e-9)
    write_plan_csv(sol.coupling, (x, p), (x, p), tmp_path / "plan.csv", ["run 1"])
    lines = (tmp_path / "plan.csv").read_text().splitlines()
    assert lines[0] == "# run 1"
    assert lines[1] == "i,j,x_1,y_1,density"
    assert len(lines) == 2 + sol.coupling.nnz
    write_stats(sol.stats, tmp_path / "stats.txt")
    kv = dict(line.split(" = ") for line in (tmp_path / "stats.txt").read_text().splitlines())
    assert {"iterations", "row_defect", "support_fraction", "primal", "dual"} <= set(kv)
    assert float(kv["dual"]) == sol.value
