"""Acceptance suite: criteria 1-10, one PASS/FAIL line each.

Each criterion is a single test.  Its sub-checks are reported together, and
the test fails if any of them fails.  Where a stated target disagrees with the
computed limit, the line also shows the value against the corrected constant
``2(d+2)/((d+4) c_d^{2/(d+2)})`` for reference.  That comparison never turns
a FAIL into a PASS.
"""

import math

import numpy as np

from qotlimit.analytic import make_family
from qotlimit.asymptotics import corollary_deviation, lower_value, theoretical_limit
from qotlimit.barenblatt import (
    build_frame,
    constants,
    corollary_profile_v,
    frame_coupling,
    paraboloid_integral,
    xi_and_marginal,
)
from qotlimit.discrete_ot import w2_from_map
from qotlimit.measures import BoxDomain
from qotlimit.pme import (
    BarenblattProfile,
    barenblatt,
    barenblatt_vec,
    corollary_match,
    free_energy,
    mass,
    pme_residual,
    support_radius,
)
from qotlimit.qot import check_coupling, primal_objective, solve

from .conftest import random_instance
from .oracles import qot_qp
from .test_barenblatt import _radial_oracle


def _verdict(request, number, checks):
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name} {'ok' if good else 'FAILED'} ({info})"
                       for name, good, info in checks)
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    request.config.acceptance_lines.append(line)
    print(line)
    assert ok, line


def test_criterion_1_rate_d1(request, identity_sweep_1d):
    rep = identity_sweep_1d
    target = 1.5 ** (2 / 3)
    rel = rep.fitted_constant / target - 1
    _verdict(request, 1, [
        ("exponent", abs(rep.fitted_exponent - 2 / 3) <= 0.03,
         f"{rep.fitted_exponent:.4f} vs 0.6667 +- 0.03"),
        ("constant", abs(rel) <= 0.05,
         f"{rep.fitted_constant:.6f} vs {target:.6f}, rel {rel:+.3f}; corrected "
         f"{rep.corrected_constant:.6f}, rel {rep.fitted_constant / rep.corrected_constant - 1:+.2e}"),
    ])


def test_criterion_2_rate_d2(request, identity_sweep_2d):
    rep = identity_sweep_2d
    _verdict(request, 2, [
        ("exponent", abs(rep.fitted_exponent - 0.5) <= 0.05,
         f"{rep.fitted_exponent:.4f} vs 0.5 +- 0.05"),
    ])


def test_criterion_3_affine(request, affine_sweep_1d, affine_1d):
    rep = affine_sweep_1d
    limit = theoretical_limit(affine_1d)
    rel = rep.fitted_constant / limit - 1
    _verdict(request, 3, [
        ("limit", abs(limit - 1.0400) <= 5e-5, f"theoretical_limit {limit:.6f}"),
        ("constant", abs(rel) <= 0.07,
         f"{rep.fitted_constant:.6f} vs {limit:.6f}, rel {rel:+.3f}; corrected "
         f"{rep.corrected_constant:.6f}, rel {rep.fitted_constant / rep.corrected_constant - 1:+.2e}"),
    ])


def test_criterion_4_constants(request):
    checks = []
    for d in (1, 2, 3):
        k = constants(d)
        checks.append((f"c_d=c_d1 d={d}", k.c_d == k.c_d1, f"{k.c_d:.12g}"))
        err = abs(2 * d / k.c_d ** (2 / (d + 2)) - k.theorem_constant)
        checks.append((f"theorem d={d}", err <= 1e-12, f"err {err:.1e}"))
    for d in (1, 2):
        k = constants(d)
        e1 = abs(_radial_oracle(1.0, d, 1) / k.c_d1 - 1)
        e2 = abs(_radial_oracle(1.0, d, 2) / k.c_d2 - 1)
        e3 = abs(paraboloid_integral(2.0, d, 1) / _radial_oracle(2.0, d, 1) - 1)
        checks.append((f"quadrature d={d}", max(e1, e2, e3) <= 1e-6,
                       f"rel {max(e1, e2, e3):.1e}"))
    _verdict(request, 4, checks)


def test_criterion_5_duality(request):
    gaps, qp = [], []
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        d = 1 + seed % 3
        (x, p), (y, q) = random_instance(rng, 30 + 2 * seed, 50 - seed, d)
        diam2 = float(np.max(np.sum((np.vstack([x, y])[:, None] - np.vstack([x, y])) ** 2,
                                    axis=-1)))
        eps = 10.0 ** (-1 - seed % 3)
        sol = solve((x, p), (y, q), eps, tol=1e-10)
        gaps.append((primal_objective(sol.coupling, (x, p), (y, q)) - sol.value) / diam2)
    for seed in range(4):
        rng = np.random.default_rng(200 + seed)
        (x, p), (y, q) = random_instance(rng, 10, 10, 1 + seed % 2)
        eps = (0.03, 0.005)[seed % 2]
        ref, _ = qot_qp(x, p, y, q, eps)
        qp.append(abs(solve((x, p), (y, q), eps, tol=1e-12).value - ref))
    _verdict(request, 5, [
        ("primal-dual", max(np.abs(gaps)) <= 1e-6,
         f"max |gap|/diam^2 {max(np.abs(gaps)):.1e} over 10 instances"),
        ("QP oracle", max(qp) <= 1e-8, f"max |T - T_qp| {max(qp):.1e} over 4 instances"),
    ])


def test_criterion_6_sandwich(request, identity_1d, identity_sweep_1d, glass_d005_e4):
    pair = identity_1d
    eps = 1e-4
    k = list(identity_sweep_1d.eps_list).index(eps)
    solver = identity_sweep_1d.scaled_gaps[k]
    lower = lower_value(pair, eps)
    cost = primal_objective(glass_d005_e4.coupling, pair.rho0, glass_d005_e4.target_points(pair))
    upper = (cost - w2_from_map(pair).value) / eps ** (2 / 3)
    limit = theoretical_limit(pair)
    corrected = theoretical_limit(pair, "corrected")
    ratios = np.array([lower, solver, upper]) / limit
    _verdict(request, 6, [
        ("ordering", lower <= solver + 1e-6 and solver <= upper + 1e-6,
         f"{lower:.5f} <= {solver:.5f} <= {upper:.5f}"),
        ("band", bool(np.all((ratios >= 0.8) & (ratios <= 1.3))),
         f"ratios to {limit:.4f}: {', '.join(f'{r:.3f}' for r in ratios)}; to corrected "
         f"{corrected:.4f}: {', '.join(f'{v / corrected:.3f}' for v in (lower, solver, upper))}"),
    ])


def test_criterion_7_feasibility(request, identity_1d, glass_d005_e4):
    pair = identity_1d
    p = pair.rho0.weights
    eps = 1e-4
    xi = xi_and_marginal(pair, eps)
    col = np.asarray(xi.xi.T @ p).ravel()
    mass_err = abs(xi.total_mass(p) - 1)
    sym_err = float(np.max(np.abs(col - xi.rho_eps)))
    frame = build_frame(pair.rho0, 0.05)
    x = pair.rho0.points[frame.frame_nodes, 0]
    fr_err = 0.0
    for q in (1.0, 0.5 + 0.4 * np.cos(5 * x) ** 2):
        fc = frame_coupling(pair, frame, q, eps)
        fr_err = max(fr_err, float(np.max(np.abs(fc.marginal(p) - q))))
    gc = glass_d005_e4
    v_err = max(gc.row_defect, gc.col_defect)
    _verdict(request, 7, [
        ("xi mass", mass_err <= 1e-10, f"{mass_err:.1e}"),
        ("xi symmetric marginals", sym_err <= 1e-10, f"{sym_err:.1e}"),
        ("frame marginals", fr_err <= 1e-8, f"{fr_err:.1e}"),
        ("v_eps marginals", v_err <= 1e-3, f"{v_err:.1e} (delta=0.05, eps=1e-4)"),
    ])


def _band_constant(n, eps):
    pair = make_family("perturbed", d=1, n=n)
    sol = solve(pair.rho0, pair.rho1, eps, tol=1e-9)
    c = sol.coupling
    dev = np.linalg.norm(pair.rho1.points[c.cols] - pair.grad_g_star(pair.rho0.points[c.rows]),
                         axis=1)
    return float(dev.max()) / eps ** (1 / 3)


def test_criterion_8_bandwidth(request, identity_sweep_1d):
    c1 = _band_constant(1000, 1e-3)
    c2 = _band_constant(2000, 1e-3)
    fr = identity_sweep_1d.support_fractions
    _verdict(request, 8, [
        ("band constant", abs(c2 / c1 - 1) <= 0.2, f"C = {c1:.4f} (n=1000), {c2:.4f} (n=2000)"),
        ("support below 1", bool(np.all(fr < 1)), f"max {fr.max():.4f}"),
        ("support decreasing", bool(np.all(np.diff(fr) <= 0.01)),
         ", ".join(f"{f:.4f}" for f in fr)),
    ])


def test_criterion_9_pme(request):
    spread = 0.0
    for m in (2, 3):
        for d in (1, 2):
            ms = [mass(BarenblattProfile(m=m, d=d, C=1.0), t) for t in (0.5, 1, 2, 4)]
            spread = max(spread, max(ms) - min(ms))
    prof = BarenblattProfile(m=2, d=1, C=1.0)
    R = 1.2 * math.sqrt(prof.C / prof.k) * 2 ** prof.beta_exp
    res = [pme_residual(prof, 1.0, BoxDomain([-R], [R], n)) for n in (40, 80, 160)]
    ratio = res[1] / res[2]
    energies = []
    Rb = 2.0 * support_radius(prof, 2.0)
    dom = BoxDomain([-Rb], [Rb], 4000)
    for t in (1.0, 2.0):
        energies.append(free_energy(barenblatt_vec(prof, t, dom.nodes()), dom, 2))
    pair = make_family("identity", d=1, n=100)
    rng = np.random.default_rng(9)
    match = 0.0
    for _ in range(20):
        xp, t = rng.uniform(0.1, 0.9), 10 ** rng.uniform(-4, 0)
        x = xp + rng.normal(scale=0.3) * t ** (1 / 3)
        bp, scale = corollary_match(pair, xp)
        v = corollary_profile_v(pair, t, np.array([[x]]), np.array([[xp]]))[0]
        match = max(match, abs(barenblatt(bp, t, scale * (x - xp)) - v))
    _verdict(request, 9, [
        ("mass", spread <= 1e-6, f"spread {spread:.1e}"),
        ("residual order", 3.5 <= ratio <= 4.5, f"ratio {ratio:.3f}"),
        ("free energy decreasing", energies[1] < energies[0],
         f"E(1) = {energies[0]:.4f}, E(2) = {energies[1]:.4f}"),
        ("m=2 profile match", match <= 1e-10, f"max diff {match:.1e}"),
    ])


def test_criterion_10_corollary(request, identity_1d_small):
    pair = identity_1d_small
    devs = []
    for eps in (1e-2, 10 ** -2.5, 1e-3, 10 ** -3.5, 1e-4):
        sol = solve(pair.rho0, pair.rho1, eps, tol=1e-9)
        check_coupling(sol.coupling, pair.rho0, pair.rho1, 1e-8)
        devs.append(corollary_deviation(pair, sol.coupling, eps, "matched"))
    _verdict(request, 10, [
        ("deviation decreasing", bool(np.all(np.diff(devs) < 0)),
         ", ".join(f"{v:.4f}" for v in devs)),
    ])
