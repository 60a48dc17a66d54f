import numpy as np
import pytest
from scipy import integrate as si

from sl2walk import mobius as mb
from sl2walk import sphere as sp
from sl2walk.errors import EmptyRegion, Overflow, UnresolvedRadius
from sl2walk.invariants import random_sl2
from sl2walk.mobius import GroupElement, ProjPoint
from sl2walk.transfer import EmpiricalMeasure


def _inv_one_plus(grid):
    # 1/(1+|z|^2) with z the affine coordinate of the point
    return sp.GridFunction.from_points(grid, lambda v: np.abs(v[..., 1]) ** 2)


def test_total_mass(grid):
    assert sp.integrate(sp.GridFunction.constant(grid, 1.0)) == pytest.approx(1.0, abs=1e-6)


def test_partition_of_unity():
    t = np.linspace(-1, 1, 1001)
    assert np.max(np.abs(sp.ramp(t) + sp.ramp(-t) - 1)) < 1e-12


def test_radial_oracle_and_refinement(grid):
    # int_0^inf 1/(1+s) ds/(1+s)^2 = 1/2
    oracle = si.quad(lambda s: 1 / (1 + s) ** 3, 0, np.inf)[0]
    assert oracle == pytest.approx(0.5)
    fine = abs(sp.integrate(_inv_one_plus(grid)) - oracle)
    coarse = abs(sp.integrate(_inv_one_plus(sp.SphereGrid(64, 128))) - oracle)
    assert fine < 1e-6
    assert coarse < 1e-6 or coarse / fine > 3.0


def test_hemisphere(grid):
    f = sp.GridFunction.from_points(grid, lambda v: 0.5 * (1 + np.tanh(sp.sphere_xyz(v)[..., 2] / 0.05)))
    assert sp.integrate(f) == pytest.approx(0.5, abs=1e-3)


def test_del_constant_vanishes(grid):
    phi = sp.del_(sp.GridFunction.constant(grid, 3.0))
    assert np.max(np.abs(phi.coef)) == 0.0
    assert sp.l2_form_norm(phi) == 0.0


def test_del_of_re_z(grid):
    f = sp.GridFunction(grid, np.stack([grid.coord[0].real, (1 / grid.coord[1]).real]))
    coef = sp.del_(f).coef[0]
    live = grid.chi[0] > 0
    assert np.max(np.abs(coef[live] - 0.5)) < 1e-3


def test_del_matches_analytic_in_both_charts(grid):
    # x = 2 Re z / (1 + |z|^2) has d/dz x = (1 - zbar^2) / (1 + |z|^2)^2 in each chart;
    # the same expression in w = 1/z is the cocycle dz = -dw / w^2 at work
    f = sp.GridFunction.from_points(grid, lambda v: sp.sphere_xyz(v)[..., 0])
    coef = sp.del_(f).coef
    z = grid.coord
    exact = (1 - np.conj(z) ** 2) / (1 + np.abs(z) ** 2) ** 2
    live = grid.chi > 0
    assert np.max(np.abs(coef - exact)[live]) < 1e-3


@pytest.mark.parametrize("lam", [np.sqrt(2), 2.0, 4.0, 10.0])
def test_theta_energy_matches_radial_oracle(grid, lam):
    b = lam ** 4
    radial = 2 * np.pi * si.quad(lambda s: (b - 1) ** 2 * s / ((b * s + 1) ** 2 * (s + 1) ** 2),
                                 0, np.inf, limit=200)[0]
    e = sp.theta_energy(grid, GroupElement.diag(lam))
    assert e == pytest.approx(radial, rel=1e-2)
    assert e <= sp.theta_energy_bound(lam)


def test_theta_energy_bound_value():
    # beta = 4 for lambda = sqrt 2
    assert sp.theta_energy_bound(np.sqrt(2)) == pytest.approx(2 * np.pi * 3 / 5 * np.log(4))


def test_jacobian_bound(grid):
    gs = random_sl2(np.random.default_rng(8), 100)
    for g in gs:
        jac = sp.fs_jacobian(g, grid.points)
        assert np.max(jac) <= mb.opnorm_arr(g) ** 4 * (1 + 1e-6)


def test_jacobian_integrates_to_one(grid):
    # g^* omega_FS is again a probability form
    g = GroupElement([[1.4, 0.3], [0.1, (1 + 0.03) / 1.4]])
    assert sp.integrate(sp.GridFunction(grid, sp.fs_jacobian(g, grid.points))) == pytest.approx(1, abs=1e-3)


def test_w12_trivial_cases(grid):
    c = sp.GridFunction.constant(grid, -2.5)
    assert sp.w12_norm(c) == pytest.approx(2.5)
    z = sp.GridFunction.constant(grid, 0.0)
    nu = EmpiricalMeasure(np.array([[1, 0], [0, 1]], dtype=complex))
    for v in ("FS", "L1", "L2"):
        assert sp.w12_norm(z, v) == 0
    assert sp.w12_norm(z, "Nu", nu=nu) == 0
    assert sp.w12_norm(z, "SubsetU", region=lambda p: np.abs(p[..., 0]) < np.abs(p[..., 1])) == 0


def test_w12_empty_region(grid):
    with pytest.raises(EmptyRegion):
        sp.w12_norm(sp.GridFunction.constant(grid, 1.0), "SubsetU", region=lambda p: np.zeros(p.shape[:-1]))


def test_w12_variants_equivalent(grid):
    rng = np.random.default_rng(3)
    upper = lambda p: sp.sphere_xyz(p)[..., 2] > 0.3  # noqa: E731
    nu = EmpiricalMeasure(mb.unit_arr(rng.standard_normal((2000, 2)) + 1j * rng.standard_normal((2000, 2))))
    ratios = []
    for _ in range(100):
        f = sp.random_function(grid, rng) + rng.normal()
        base = sp.w12_norm(f)
        ratios.append([sp.w12_norm(f, v, region=upper, nu=nu) / base
                       for v in ("L1", "L2", "SubsetU", "Nu")])
    ratios = np.array(ratios)
    K = max(ratios.max(), 1 / ratios.min())
    assert np.isfinite(K) and K < 50


def test_bump_support_and_level(grid):
    a = ProjPoint(0.3, 1)
    r, eps = 0.125, 0.25
    u = sp.bump_u(grid, a, r, eps)
    d = mb.chordal_arr(grid.points, a.vec)
    assert np.all(u.values[d >= 2 * r] == 0)
    assert sp.bump_values(np.array([r]), r, eps)[0] == pytest.approx(np.log(2) ** (0.5 - eps))


def test_bump_unresolved(grid):
    with pytest.raises(UnresolvedRadius):
        sp.bump_u(grid, ProjPoint(1, 1), 1e-4)


@pytest.fixture(scope="module")
def fine_grid():
    # resolves r = 2^-6 at every center under the 4 x spacing rule
    return sp.SphereGrid(576, 1152)


@pytest.fixture(scope="module")
def eight_centers():
    v = np.random.default_rng(4).standard_normal((8, 2)) + 1j * np.random.default_rng(5).standard_normal((8, 2))
    return [ProjPoint(x) for x in mb.unit_arr(v)]


def test_bump_family_bounded(fine_grid, eight_centers):
    radii = 2.0 ** -np.arange(3, 7)
    norms = np.array([[sp.w12_norm(sp.bump_u(fine_grid, a, r)) for a in eight_centers] for r in radii])
    assert np.all(np.isfinite(norms))
    assert norms.max() < 3 * norms.min()


def test_bump_edge_energy_grows_under_refinement():
    # the corner t^(1/2 - eps) at the rim of the support has infinite energy:
    # each mesh halving multiplies the discrete energy by about sqrt 2
    a = ProjPoint(0.3, 1)
    e = [sp.l2_form_norm_sq(sp.del_(sp.bump_u(sp.SphereGrid(n, 2 * n), a, 0.125))) for n in (128, 256, 512)]
    ratios = np.array(e[1:]) / np.array(e[:-1])
    assert np.allclose(ratios, np.sqrt(2), rtol=0.05)


def test_luxemburg_examples(grid, rng):
    q = sp.YoungFunction.power(3)
    assert sp.luxemburg_norm(sp.GridFunction.constant(grid, 0.0), q) == 0
    assert sp.luxemburg_norm(sp.GridFunction.constant(grid, 1.7), q) == pytest.approx(1.7, rel=1e-6)
    h = sp.YoungFunction.hybrid_exp_cube()
    for _ in range(5):
        f = sp.random_function(grid, rng)
        for phi in (q, h):
            assert sp.luxemburg_norm(f * 2, phi) == pytest.approx(2 * sp.luxemburg_norm(f, phi), rel=1e-6)


def test_young_functions_valid():
    assert sp.YoungFunction.power(2).check()
    h = sp.YoungFunction.hybrid_exp_cube()
    assert h.check()
    t = np.array([0.2, 0.5, 1.0, 2.0])
    assert np.allclose(h(t[:2]), np.exp(-t[:2] ** -3))
    assert np.allclose(h(t[2:]), np.exp(t[2:] ** 2))


def test_moser_trudinger_trivial(grid):
    assert sp.moser_trudinger_probe([sp.GridFunction.constant(grid, 0.0)], 3.0) == pytest.approx(1.0, abs=1e-6)
    c = 0.8
    v = sp.moser_trudinger_probe([sp.GridFunction.constant(grid, c)], 2.0)
    assert v == pytest.approx(np.exp(2.0 * c * c), rel=1e-6)
    with pytest.raises(Overflow):
        sp.moser_trudinger_probe([sp.GridFunction.constant(grid, 100.0)], 1.0)


def test_moser_trudinger_bumps_mesh_stable():
    pts = mb.unit_arr(np.random.default_rng(9).standard_normal((50, 2)) + 1j * np.random.default_rng(10).standard_normal((50, 2)))
    out = []
    for g in (sp.SphereGrid(64, 128), sp.default_grid()):
        fam = [sp.bump_u(g, ProjPoint(v), 0.25) for v in pts]
        out.append(sp.moser_trudinger_probe(fam, 2.0))
    assert np.all(np.isfinite(out))
    assert out[1] == pytest.approx(out[0], rel=0.05)


def test_calibrate_alpha(grid):
    fam = [sp.GridFunction.constant(grid, 1.0)]
    a = sp.calibrate_alpha(fam, a_cap=np.e ** 2)
    assert a == pytest.approx(2.0, rel=0.01)


def test_serialisation_roundtrip(grid, rng, tmp_path):
    f = sp.random_function(grid, rng)
    g = sp.from_bytes(sp.to_bytes(f))
    assert np.array_equal(g.values, f.values)
    phi = sp.random_form(grid, rng)
    assert np.array_equal(sp.from_bytes(sp.to_bytes(phi)).coef, phi.coef)
    sp.to_csv(f, tmp_path / "f.csv")
    head = (tmp_path / "f.csv").read_text().splitlines()
    assert head[0] == "chart,ring,angle,re_coord,im_coord,value"
    assert len(head) == grid.size + 1
