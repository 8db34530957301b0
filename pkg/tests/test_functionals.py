import math

import numpy as np
import pytest

from entbump.dyadic import average, from_nested, uniform
from entbump.errors import DivisionByZero, InvalidPath, MidpointMismatch, NotQuasiconcave
from entbump.functionals import (DistributionFn, a2_and_wilson, combine, concavity_gap,
                                 distribution_fn, least_concave_majorant, lorentz_norm,
                                 mass_functional, psi0, second_derivative_check, u_star)
from entbump.generators import random_midpoint_pair, random_model, random_weight


def psi0_ref(s):
    return 0.0 if s == 0 else s * (1 - math.log(s))


def ustar_ref(vals, m):
    """Layer-cake sum of ψ₀(|{w > t}|), built from sorted distinct values."""
    levels = sorted(set(v for v in vals if v > 0))
    tot, prev = 0.0, 0.0
    for lv in levels:
        frac = sum(mi for v, mi in zip(vals, m) if v >= lv)
        tot += (lv - prev) * psi0_ref(frac)
        prev = lv
    return tot


def test_distribution_of_constant():
    m = uniform(2, 1)
    N = distribution_fn(m, np.ones(2), 0)
    assert N(0.5) == 1.0 and N(1.0) == 0.0


def test_distribution_of_half():
    m = uniform(2, 1)
    N = distribution_fn(m, np.array([2.0, 0.0]), 0)
    assert N(1.9) == 0.5 and N(2.0) == 0.0


def test_distribution_martingale_identity(rng):
    for _ in range(20):
        m = random_model(rng, max_depth=4)
        w = random_weight(rng, m)
        for I in range(m.n_atoms):
            ch = m.children[I]
            if not ch:
                continue
            N = distribution_fn(m, w, I)
            parts = combine([m.mass[c] / m.mass[I] for c in ch], [distribution_fn(m, w, c) for c in ch])
            grid = np.unique(np.concatenate([N.thresholds, parts.thresholds]))
            probe = np.concatenate([[0.0], grid, grid - 1e-9 * grid])
            assert np.allclose(N(probe), parts(probe), atol=1e-12)


def test_lorentz_examples():
    m = uniform(2, 1)
    assert lorentz_norm(distribution_fn(m, np.ones(2), 0)) == pytest.approx(1.0)
    m4 = uniform(2, 2)
    ind = distribution_fn(m4, np.array([1.0, 0, 0, 0]), 0)
    assert lorentz_norm(ind) == pytest.approx(0.25 * (1 + math.log(4)), rel=1e-12)
    assert lorentz_norm(ind) == pytest.approx(0.596574, abs=1e-6)
    half = distribution_fn(m, np.array([2.0, 0.0]), 0)
    assert lorentz_norm(half) == pytest.approx(math.log(2 * math.e), rel=1e-12)


def test_lorentz_identity_psi_is_mass(rng):
    for _ in range(50):
        m = random_model(rng, max_depth=4)
        w = random_weight(rng, m)
        N = distribution_fn(m, w, 0)
        assert lorentz_norm(N, lambda s: np.asarray(s)) == pytest.approx(mass_functional(N), rel=1e-12)


def test_mass_functional_matches_average(rng):
    for _ in range(1000):
        m = random_model(rng, max_depth=3, max_leaves=12)
        w = random_weight(rng, m)
        I = int(rng.integers(m.n_atoms))
        assert mass_functional(distribution_fn(m, w, I)) == pytest.approx(average(m, w, I), rel=1e-10)


def test_ustar_examples():
    m = uniform(2, 1)
    assert u_star(m, np.ones(2), 0, "maximal") == pytest.approx(1.0)
    assert u_star(m, np.ones(2), 0, "lorentz") == pytest.approx(1.0)
    w = np.array([2.0, 0.0])
    assert u_star(m, w, 0, "maximal") == pytest.approx(1.5)
    assert u_star(m, w, 0, "lorentz") == pytest.approx(1.693147, abs=1e-6)


@pytest.mark.parametrize("a", [1.0, 2.0, 5.0, 100.0])
def test_ustar_of_small_indicator(a):
    m = from_nested([1 / a, 1 - 1 / a]) if a > 1 else from_nested([1.0])
    w = np.array([1.0, 0.0]) if a > 1 else np.array([1.0])
    assert u_star(m, w, 0, "lorentz") == pytest.approx(math.log(math.e * a) / a, rel=1e-12)


def test_ustar_variants_ordered_and_match_layer_cake(rng):
    for _ in range(200):
        m = random_model(rng, max_depth=5)
        w = random_weight(rng, m)
        I = int(rng.integers(m.n_atoms))
        sl = m.leaf_slice(I)
        lor = u_star(m, w, I, "lorentz")
        assert lor == pytest.approx(ustar_ref(list(w[sl]), list(m.leaf_mass[sl] / m.mass[I])), rel=1e-10)
        assert u_star(m, w, I, "maximal") <= lor * (1 + 1e-12)


def test_lcm_fixed_point_for_concave():
    s = np.linspace(0.01, 1, 100)
    hull = least_concave_majorant(s, psi0(s))
    assert np.allclose(hull(s), psi0(s), rtol=1e-12)


def test_lcm_chord_example():
    s = np.linspace(0.0, 1.0, 101)[1:]
    vals = np.minimum(2 * s, s + 0.1)
    hull = least_concave_majorant(s, vals)
    # hull from (0,0) to (0.1,0.2), then the line s + 0.1; the function is already concave
    assert np.allclose(hull(s), vals)
    assert np.all(0.5 * hull(s) <= vals + 1e-15) and np.all(vals <= hull(s) + 1e-15)


def test_lcm_sandwich_on_nonconcave():
    s = np.array([0.1, 0.2, 0.5, 1.0])
    vals = np.array([0.3, 0.3, 0.6, 0.6])  # quasiconcave, not concave
    hull = least_concave_majorant(s, vals)
    h = hull(s)
    assert np.all(vals <= h + 1e-15) and np.all(0.5 * h <= vals + 1e-15)
    assert h[1] == pytest.approx(0.3 + 0.1 * (0.3 / 0.4), rel=1e-12)


def test_lcm_rejects_non_quasiconcave():
    with pytest.raises(NotQuasiconcave):
        least_concave_majorant(np.array([0.5, 1.0]), np.array([1.0, 0.5]))


def test_concavity_gap_degenerate():
    N = DistributionFn.from_pairs([[1.0, 0.5]])
    g = concavity_gap(N, N, N)
    assert g.gap == pytest.approx(0.0, abs=1e-15) and g.lower_bound == 0.0


def test_concavity_gap_quarter_pair():
    N = DistributionFn.from_pairs([[1.0, 0.5]])
    N1 = DistributionFn.from_pairs([[1.0, 0.75]])
    N2 = DistributionFn.from_pairs([[1.0, 0.25]])
    g = concavity_gap(N, N1, N2)
    expect = psi0_ref(0.5) - 0.5 * (psi0_ref(0.75) + psi0_ref(0.25))
    assert g.gap == pytest.approx(expect, rel=1e-12)
    assert g.gap == pytest.approx(0.0654, abs=1e-4)
    assert g.u == 0.5 and g.u_delta == 0.25
    assert g.lower_bound == pytest.approx(1 / 16)
    assert g.holds


def test_concavity_gap_rejects_non_midpoint():
    N = DistributionFn.from_pairs([[1.0, 0.4]])
    N1 = DistributionFn.from_pairs([[1.0, 0.75]])
    N2 = DistributionFn.from_pairs([[1.0, 0.25]])
    with pytest.raises(MidpointMismatch):
        concavity_gap(N, N1, N2)


def test_concavity_gap_random_pairs(rng):
    for _ in range(10_000):
        N1, N2 = random_midpoint_pair(rng)
        N = combine([0.5, 0.5], [N1, N2])
        g = concavity_gap(N, N1, N2)
        scale = max(1.0, abs(g.gap))
        assert g.gap >= g.lower_bound - 1e-12 * scale


def test_concavity_gap_scaling():
    N1 = DistributionFn.from_pairs([[1.0, 0.9], [3.0, 0.2]])
    N2 = DistributionFn.from_pairs([[2.0, 0.3]])
    N = combine([0.5, 0.5], [N1, N2])
    g = concavity_gap(N, N1, N2)
    lam = 3.7
    gs = concavity_gap(N.scale_thresholds(lam), N1.scale_thresholds(lam), N2.scale_thresholds(lam))
    assert gs.gap == pytest.approx(lam * g.gap, rel=1e-12)
    assert gs.lower_bound == pytest.approx(lam * g.lower_bound, rel=1e-12)


def test_second_derivative_zero_direction():
    N = DistributionFn.from_pairs([[1.0, 0.75]])
    row = second_derivative_check(N, N, [0.0, 0.5])[0]
    assert row.d2 == 0.0 and row.bound == 0.0


def test_second_derivative_proportional_equality():
    N = DistributionFn.from_pairs([[1.0, 0.75]])
    N1 = DistributionFn.from_pairs([[1.0, 0.25]])
    row = second_derivative_check(N, N1, [0.0])[0]
    # ΔN = −½ on [0,1): ∫ΔN²/N = ¼/¾ and u_Δ²/u = ¼/¾
    assert row.d2 == pytest.approx(1 / 3, rel=1e-12)
    assert row.bound == pytest.approx(1 / 3, rel=1e-12)


def test_second_derivative_matches_finite_differences(rng):
    N, N1 = random_midpoint_pair(rng)
    th = 0.3
    rows = second_derivative_check(N, N1, [th])
    f = lambda t: lorentz_norm(combine([1 - t, t], [N, N1]))
    h = 1e-4
    fd = -(f(th + h) - 2 * f(th) + f(th - h)) / h ** 2
    assert rows[0].d2 == pytest.approx(fd, rel=1e-4)


def test_second_derivative_random(rng):
    for _ in range(500):
        N, N1 = random_midpoint_pair(rng)
        for r in second_derivative_check(N, N1, np.linspace(0.05, 0.95, 7)):
            assert r.d2 >= r.bound - 1e-12 * max(1.0, r.d2)
            assert r.bound >= r.weaker - 1e-12 * max(1.0, r.bound)


def test_second_derivative_invalid_path():
    N = DistributionFn.from_pairs([[1.0, 0.75]])
    N1 = DistributionFn.from_pairs([[1.0, 0.25]])
    with pytest.raises(InvalidPath):
        second_derivative_check(N, N1, [2.0])


def test_a2_examples():
    m = uniform(2, 1)
    r = a2_and_wilson(m, np.ones(2))
    assert r.A2 == pytest.approx(1.0) and r.Ainfty == pytest.approx(1.0)
    r = a2_and_wilson(m, np.array([2.0, 0.5]))
    assert r.A2 == pytest.approx(25 / 16, rel=1e-12)
    with pytest.raises(DivisionByZero):
        a2_and_wilson(m, np.array([1.0, 0.0]))


def test_wilson_two_leaf_closed_form():
    # M(v·1_I) equals v on the big leaf and ⟨v⟩ on the small one
    m = from_nested([0.3, 0.7])
    v = np.array([5.0, 4.0])
    avg = 0.3 * 5 + 0.7 * 4
    expect = (0.3 * 5 + 0.7 * avg) / avg
    assert a2_and_wilson(m, v).Ainfty == pytest.approx(expect, rel=1e-12)
