"""Acceptance suite: the thirteen criteria at their stated tolerances.

Each test prints one line "CRITERION k: PASS|FAIL ..." before asserting.
Criteria 5 and 6 do not hold for this implementation; their analysis is in
the decision ledger and the tests are left failing on purpose.
"""
import os
import time

import numpy as np
import pytest
from scipy import integrate as si

from sl2walk import cli
from sl2walk import limits as lt
from sl2walk import measures as ms
from sl2walk import mobius as mb
from sl2walk import regularity as rg
from sl2walk import sphere as sp
from sl2walk import transfer as tr
from sl2walk.config import make_config, named_function
from sl2walk.mobius import GroupElement, MobiusClass, ProjPoint
from sl2walk.transfer import EmpiricalMeasure

pytestmark = pytest.mark.acceptance
WORKERS = os.cpu_count() or 1
FIXTURES = {
    "schottky2": "NonElementary",
    "elementary_rot": "ElementaryCompact",
    "elementary_diag": "ElementaryFiniteOrbit",
    "parabolic_pair": "NonElementary",
}


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail, t0):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.time() - t0:.1f} s)")
        return ok
    return emit


def _random_sl2(gen, n):
    a = gen.standard_normal((n, 2, 2)) + 1j * gen.standard_normal((n, 2, 2))
    return mb.renormalize_arr(a)


def test_1_contraction(report, grid):
    t0 = time.time()
    worst = 0.0
    gen = np.random.default_rng(101)
    forms = [sp.random_form(grid, gen) for _ in range(100)]
    for name in FIXTURES:
        mu = ms.fixture(name)
        for phi in forms:
            worst = max(worst, sp.l2_form_norm(tr.pullback_form(mu, phi)) / sp.l2_form_norm(phi))
    ok = worst <= 1 + 2e-3
    assert report(1, ok, f"max norm ratio {worst:.6f} over 100 forms x 4 fixtures", t0)


def test_2_jacobian_bound(report, grid):
    t0 = time.time()
    worst = 0.0
    for g in _random_sl2(np.random.default_rng(102), 100):
        worst = max(worst, float(np.max(sp.fs_jacobian(g, grid.points)) / mb.opnorm_arr(g) ** 4))
    ok = worst <= 1 + 1e-6
    assert report(2, ok, f"max Jacobian / ||g||^4 = {worst:.6f}", t0)


def test_3_theta_energy(report, grid):
    t0 = time.time()
    rows, ok = [], True
    for lam in (np.sqrt(2), 2.0, 4.0, 10.0):
        b = lam ** 4
        oracle = 2 * np.pi * si.quad(lambda s: (b - 1) ** 2 * s / ((b * s + 1) ** 2 * (s + 1) ** 2),
                                     0, np.inf, limit=200)[0]
        e = sp.theta_energy(grid, GroupElement.diag(lam))
        rel = abs(e - oracle) / oracle
        ok &= rel < 1e-2 and e <= sp.theta_energy_bound(lam)
        rows.append(f"{lam:.3g}:{rel:.1e}")
    assert report(3, ok, "rel. error vs radial oracle " + " ".join(rows), t0)


def test_4_spectral_gap(report):
    t0 = time.time()
    s = tr.gap_estimate(ms.fixture("schottky2"), 4).norm_estimate
    r = tr.gap_estimate(ms.fixture("elementary_rot"), 4).norm_estimate
    ok = s < 0.95 and r >= 0.999
    assert report(4, ok, f"schottky2 N=4 {s:.4f}, elementary_rot N=4 {r:.6f}", t0)


def test_5_exponential_convergence(report, grid):
    t0 = time.time()
    mu = ms.fixture("schottky2")
    target = np.log(tr.gap_estimate(mu, 1).norm_estimate)
    ok, rows = True, []
    for name in ("x", "z", "xy+y"):
        h = sp.GridFunction.from_points(grid, named_function(name))
        fit = tr.iterate_pullback_experiment(mu, h, 40).fit
        ok &= fit.slope < 0 and fit.r_squared > 0.98 and abs(fit.slope - target) <= 0.25 * abs(target)
        rows.append(f"{name}: slope {fit.slope:.3f} R2 {fit.r_squared:.4f}")
    assert report(5, ok, "; ".join(rows) + f"; log gap(1) {target:.3f}", t0)


def test_6_equidistribution_uniformity(report):
    t0 = time.time()
    mu = ms.fixture("schottky2")
    phi = named_function("x")
    ref = tr.stationary_sample(mu, 1_000_000, 60).expect(phi)
    slopes = []
    for i, a in enumerate((ProjPoint(0, 1), ProjPoint(1, 1))):
        res = tr.equidistribution_experiment(mu, a, phi, 60, 10_000, rng=61 + i, reference=ref,
                                             workers=WORKERS)
        slopes.append(res.fit.slope)
    rel = abs(slopes[0] - slopes[1]) / max(abs(s) for s in slopes)
    ok = max(slopes) < 0 and rel < 0.20
    assert report(6, ok, f"slopes {slopes[0]:.3f} ([0:1]), {slopes[1]:.3f} ([1:1]); rel. diff {rel:.2f}", t0)


def test_7_lyapunov(report):
    t0 = time.time()
    ok, rows = True, []
    for name in ("schottky2", "parabolic_pair"):
        mu = ms.fixture(name)
        k = lt.lyapunov_kingman(mu, 1000, 10_000, rng=71, workers=WORKERS)
        nu = EmpiricalMeasure(lt.boundary_points(mu, 200_000, rng=72, workers=WORKERS))
        f = lt.lyapunov_furstenberg(mu, nu)
        se = np.hypot(k.stderr, f.stderr)
        ok &= abs(k.gamma_hat - f.gamma_hat) < 3 * se and k.gamma_hat > 3 * k.stderr
        rows.append(f"{name}: {k.gamma_hat:.5f} vs {f.gamma_hat:.5f} ({abs(k.gamma_hat - f.gamma_hat) / se:.2f} se)")
    assert report(7, ok, "; ".join(rows), t0)


@pytest.fixture(scope="module")
def gamma_schottky():
    return lt.lyapunov_kingman(ms.fixture("schottky2"), 1000, 10_000, rng=80, workers=WORKERS)


@pytest.fixture(scope="module")
def clt_schottky(gamma_schottky):
    return lt.clt_experiment(ms.fixture("schottky2"), ProjPoint(1, 1), gamma_schottky.gamma_hat, 2000,
                             10_000, rng=81, workers=WORKERS, extra_v=[ProjPoint(1j, 1)])


def test_8_clt(report, clt_schottky):
    t0 = time.time()
    s1, s2 = clt_schottky.extra["sigma2_by_v"]
    rel = abs(s1 - s2) / max(s1, s2)
    ok = clt_schottky.ks_statistic < 0.02 and rel < 0.05
    assert report(8, ok, f"KS {clt_schottky.ks_statistic:.4f}; sigma2 {s1:.6f} vs {s2:.6f} ({rel:.3f})", t0)


def test_9_green_kubo(report, grid, gamma_schottky, clt_schottky):
    t0 = time.time()
    mu = ms.fixture("schottky2")
    gamma = gamma_schottky.gamma_hat
    pts = lt.boundary_points(mu, 200_000, rng=90, workers=WORKERS)
    tail = lt.gordin_tail(mu, gamma, 30, EmpiricalMeasure(pts[:100_000]), grid)
    gk = lt.green_kubo_variance(mu, gamma, 30, 200_000, grid=grid, tail=tail, nu_points=pts)
    rel = abs(gk.sigma2 - clt_schottky.sigma2_empirical) / clt_schottky.sigma2_empirical
    ok = rel < 0.10 and tail.ratio < 1 and tail.fit.r_squared > 0.95
    assert report(9, ok, f"sigma2_GK {gk.sigma2:.6f} vs CLT {clt_schottky.sigma2_empirical:.6f} ({rel:.3f}); "
                         f"tail ratio {tail.ratio:.3f} R2 {tail.fit.r_squared:.3f}", t0)


def test_10_norm_comparison(report):
    t0 = time.time()
    rep = lt.norm_comparison_check(ms.fixture("schottky2"), ProjPoint(1, 1), 500, 10_000,
                                   delta_grid=[1e-4, 1e-3, 1e-2, 1e-1], rng=100, workers=WORKERS)
    frac = float(rep.fractions[1])
    ok = frac > 0.95 and bool(np.all(np.diff(rep.fractions) <= 0))
    assert report(10, ok, "fractions " + ", ".join(f"{d:g}:{f:.4f}" for d, f in rep.rows()), t0)


def test_11_regularity(report):
    t0 = time.time()
    mu = ms.fixture("schottky2")
    nu = EmpiricalMeasure(lt.boundary_points(mu, 1_000_000, rng=110, workers=WORKERS))
    fit = rg.regularity_fit(nu, workers=WORKERS)
    uni = rg.regularity_fit(rg.uniform_empirical(1_000_000, 111), workers=WORKERS)
    rs = 2.0 ** -np.arange(5, 16)
    hybrid = sp.YoungFunction.hybrid_exp_cube()
    v_ok = all(rg.v_eps(r, 0.25, hybrid) <= abs(np.log(r)) ** -0.125 for r in rs)
    ok = fit.alpha_hat > 0 and fit.r_squared > 0.9 and abs(uni.alpha_hat - 2) <= 0.2 and v_ok
    assert report(11, ok, f"alpha {fit.alpha_hat:.3f} R2 {fit.r_squared:.4f}; uniform alpha "
                          f"{uni.alpha_hat:.3f}; V_eps log bound {'holds' if v_ok else 'fails'}", t0)


def test_12_elementarity(report):
    t0 = time.time()
    ok, rows = True, []
    for name, status in FIXTURES.items():
        mu = ms.fixture(name)
        v = ms.elementarity_check(mu)
        agree = all(ms.elementarity_check(ms.convolution_power(mu, n)).elementary == v.elementary
                    for n in (2, 3))
        ok &= v.status == status and agree
        rows.append(f"{name}:{v.status}")
    g = GroupElement.diag(2.0)
    t = GroupElement([[1, 1], [0, 1]])
    h = t @ GroupElement.diag(3.0) @ t.inverse()
    c = g.inverse() @ h.inverse() @ g @ h
    comm = mb.classify(c) is MobiusClass.Parabolic and abs(c.matrix[1, 0]) < 1e-12
    ok &= comm
    assert report(12, ok, ", ".join(rows) + f"; commutator parabolic {comm}", t0)


def test_13_determinism(report, tmp_path):
    t0 = time.time()
    cfg = make_config({"seed": 42, "report.figures": False})
    blobs = []
    for i, threads in enumerate((4, 4, 1)):
        d = tmp_path / f"run{i}"
        cli.run("clt", cfg, d, threads)
        blobs.append(b"".join(p.read_bytes() for p in sorted(d.glob("*.csv"))))
    ok = blobs[0] == blobs[1] == blobs[2] and len(blobs[0]) > 0
    assert report(13, ok, f"clt seed 42: {len(blobs[0])} CSV bytes, threads 4,4,1", t0)
