import json
from collections import Counter

import numpy as np
import pytest

from sl2walk import measures as ms
from sl2walk import mobius as mb
from sl2walk.errors import Blowup, ConfigError, NonFinite, Sl2WalkError
from sl2walk.measures import AtomicMeasure, MomentSpec
from sl2walk.mobius import GroupElement, MobiusClass

FIXTURE_STATUS = {
    "schottky2": "NonElementary",
    "elementary_rot": "ElementaryCompact",
    "elementary_diag": "ElementaryFiniteOrbit",
    "parabolic_pair": "NonElementary",
}


def test_weights_validated():
    with pytest.raises(ValueError):
        AtomicMeasure([np.eye(2), np.diag([2, 0.5])], [0.7, 0.7])
    with pytest.raises(ValueError):
        AtomicMeasure([np.eye(2), -np.eye(2)])  # equal in PSL2


def test_moment_examples(schottky):
    ident = AtomicMeasure([np.eye(2)])
    assert ms.moment(ident, MomentSpec.exponential(1.0)).value == pytest.approx(1.0)
    assert ms.moment(schottky, MomentSpec.power(1)).value == pytest.approx(np.log(2))
    mixed = AtomicMeasure([np.diag([2, 0.5]), GroupElement.rotation((0, 1, 0), 0.9)])
    assert ms.moment(mixed, MomentSpec.power(1)).value == pytest.approx(0.5 * np.log(2))


def test_moment_overflow_flags_nonfinite():
    big = AtomicMeasure([np.diag([1e5, 1e-5])])
    with pytest.raises(NonFinite):
        ms.moment(big, MomentSpec.custom(lambda s: np.exp(np.exp(s))))


def test_moment_sampler_has_stderr():
    est = ms.moment(ms.gaussian_sampler(0.3), MomentSpec.power(1), trials=2000, rng=3)
    assert est.value > 0 and 0 < est.stderr < est.value


def test_word_sample_deterministic_measure():
    g = GroupElement([[1, 1], [0, 1]]) @ GroupElement.rotation((1, 0, 0), 0.3)
    mu = AtomicMeasure([g])
    assert ms.word_sample(mu, 1, 0).equiv(g)
    assert ms.word_sample(mu, 5, 0).equiv(g ** 5, 1e-9)


def test_word_sample_seeded():
    mu = ms.fixture("schottky2")
    assert ms.word_sample(mu, 7, 99).equiv(ms.word_sample(mu, 7, 99))


def test_trace_law_of_two_words(schottky):
    # exhaustive 2-word oracle: each ordered pair with probability 1/4
    exact = Counter()
    for a, wa in schottky:
        for b, wb in schottky:
            exact[round(abs((b @ a).trace), 6)] += wa * wb
    rng = np.random.default_rng(0)
    m = ms.word_samples_arr(schottky, 2, 100_000, rng)
    tr = np.round(np.abs(m[:, 0, 0] + m[:, 1, 1]), 6)
    emp = Counter(tr.tolist())
    assert set(emp) == set(exact)
    for k, p in exact.items():
        assert emp[k] / 1e5 == pytest.approx(p, abs=4 * np.sqrt(p * (1 - p) / 1e5) + 1e-12)


def test_convolution_power_examples(schottky):
    assert ms.convolution_power(schottky, 1).mats.shape == schottky.mats.shape
    g = GroupElement([[2, 1], [1, 1]])
    cube = ms.convolution_power(AtomicMeasure([g]), 3)
    assert len(cube) == 1 and cube.atoms[0].equiv(g ** 3, 1e-9)
    sq = ms.convolution_power(schottky, 2)
    assert len(sq) == 4
    assert np.allclose(sq.weights, 0.25)


def test_convolution_power_merges():
    r = GroupElement.rotation((0, 0, 1), np.pi / 2)
    mu = AtomicMeasure([r, r.inverse()])
    sq = ms.convolution_power(mu, 2)
    # r^2 = r^-2 in PSL2 (rotation by pi), and r r^-1 = id twice
    assert len(sq) == 2
    assert sorted(sq.weights) == pytest.approx([0.5, 0.5])


def test_convolution_power_blowup(schottky):
    with pytest.raises(Blowup):
        ms.convolution_power(schottky, 30, max_atoms=1000)


def test_moment_subadditive(schottky):
    m1 = ms.moment(schottky, MomentSpec.power(1)).value
    for n in (2, 3, 4):
        mn = ms.moment(ms.convolution_power(schottky, n), MomentSpec.power(1)).value
        assert mn <= n * m1 + 1e-12


def test_find_loxodromic_examples(schottky):
    w, g = ms.find_loxodromic(AtomicMeasure([np.diag([2, 0.5])]), 3)
    assert w == [0]
    w, g = ms.find_loxodromic(schottky, 3)
    assert len(w) == 1 and mb.classify(g) is MobiusClass.Loxodromic
    same_axis = AtomicMeasure([GroupElement.rotation((0, 0, 1), 0.3),
                               GroupElement.rotation((0, 0, 1), 1.1)])
    assert ms.find_loxodromic(same_axis, 5) is None


def test_find_loxodromic_needs_combinations():
    # two parabolics: every letter is parabolic, a product is loxodromic
    mu = ms.fixture("parabolic_pair")
    w, g = ms.find_loxodromic(mu, 2)
    assert mb.classify(g) is MobiusClass.Loxodromic
    assert ms.word_element(mu, w).equiv(g, 1e-9)


@pytest.mark.parametrize("name", sorted(FIXTURE_STATUS))
def test_fixture_verdicts(name):
    v = ms.elementarity_check(ms.fixture(name))
    assert v.status == FIXTURE_STATUS[name]
    if v.status == "NonElementary":
        word, g = v.witness
        assert mb.classify(g) is MobiusClass.Loxodromic
        assert ms.word_element(ms.fixture(name), word).equiv(g, 1e-9)


def test_diag_pair_finite_orbit():
    v = ms.elementarity_check(ms.fixture("elementary_diag"))
    affine = sorted(abs(p.affine) for p in v.points)
    assert affine[0] == 0 and np.isinf(affine[1])


def test_dense_rotations_compact():
    mu = AtomicMeasure([GroupElement.rotation((0, 0, 1), 1.0),
                        GroupElement.rotation((1, 1, 0), np.sqrt(2))])
    v = ms.elementarity_check(mu)
    assert v.status == "ElementaryCompact"
    for a in mu.mats:
        assert np.allclose(a.conj().T @ v.form @ a, v.form)


def test_conjugated_compact_measure():
    # a compact group conjugated out of SU(2) still has an invariant form
    h = GroupElement([[2, 1], [0, 0.5]])
    mu = ms.fixture("elementary_rot").conjugate(h)
    assert ms.elementarity_check(mu).status == "ElementaryCompact"


@pytest.mark.parametrize("name", sorted(FIXTURE_STATUS))
@pytest.mark.parametrize("n", [2, 3])
def test_status_agrees_with_convolution_power(name, n):
    mu = ms.fixture(name)
    v1 = ms.elementarity_check(mu)
    vn = ms.elementarity_check(ms.convolution_power(mu, n))
    assert v1.elementary == vn.elementary


def test_commutator_of_loxodromics_sharing_one_fixed_point_is_parabolic():
    # both fix infinity, the second also fixes 1 instead of 0
    g = GroupElement.diag(2.0)
    t = GroupElement([[1, 1], [0, 1]])
    h = t @ GroupElement.diag(3.0) @ t.inverse()
    assert mb.classify(h) is MobiusClass.Loxodromic
    shared = [p for p in mb.fixed_points(g) if p in mb.fixed_points(h)]
    assert len(shared) == 1
    mu = AtomicMeasure([g, h])
    c = ms.word_element(mu, ms.invert_word((1,)) + ms.invert_word((0,)) + (1, 0))
    assert mb.classify(c) is MobiusClass.Parabolic
    # exact: the commutator is unipotent upper triangular
    assert abs(c.matrix[1, 0]) < 1e-12 and abs(c.trace) == pytest.approx(2.0, abs=1e-12)


def test_power_products_of_loxodromic_and_elliptic():
    g = GroupElement.diag(1.2)
    h = GroupElement.rotation((1, 0, 0), 2.0)  # fixed points +-1, disjoint from {0, inf}
    hits = [N for N in range(1, 9) if mb.classify(g ** N @ h ** N) is MobiusClass.Loxodromic]
    assert hits


def test_sampler_refuses_elementarity():
    with pytest.raises(Sl2WalkError):
        ms.elementarity_check(ms.gaussian_sampler())


def test_json_roundtrip(tmp_path, schottky):
    p = tmp_path / "mu.json"
    p.write_text(json.dumps(schottky.to_json()))
    mu = ms.load_measure(str(p))
    assert np.allclose(mu.mats, schottky.mats) and np.allclose(mu.weights, schottky.weights)


def test_unknown_fixture():
    with pytest.raises(ConfigError):
        ms.load_measure("no_such_fixture")
