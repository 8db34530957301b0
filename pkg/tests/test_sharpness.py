import math

import numpy as np
import pytest
from scipy.integrate import quad

from entbump.errors import HypothesisViolated, SingularPoint
from entbump.sharpness import (bump_uniformity, classify, divergence_witness, entropy_pair,
                               entropy_sharpness, fundamental_pair, hilbert_of_indicator,
                               interval_family, lorentz_and_mean_of_v, stability)


def test_hilbert_values():
    assert hilbert_of_indicator(2.0) == pytest.approx(math.log(3), rel=1e-15)
    assert hilbert_of_indicator(3.0) == pytest.approx(math.log(2), rel=1e-15)
    assert hilbert_of_indicator(1e6) * 1e6 / 2 == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(SingularPoint):
        hilbert_of_indicator(1.0)
    x = np.geomspace(1 + 1e-9, 1e8, 5000)
    assert np.all(hilbert_of_indicator(x) >= 1 / x)
    # direct principal-value quadrature of ∫_{-1}^{1} dy/(x−y) away from the support
    assert hilbert_of_indicator(1.7) == pytest.approx(quad(lambda y: 1 / (1.7 - y), -1, 1)[0], rel=1e-12)


def test_weights_follow_definitions():
    s = fundamental_pair("psi:s")
    assert s.v(np.array([0.3, 2.0, -5.0])).tolist() == pytest.approx([1.0, 2.0, 5.0])
    ll = fundamental_pair("psi:llogl")
    x = 7.0
    assert ll.v(x) == pytest.approx(1 / ((1 / x) * math.log(math.e * x)), rel=1e-12)
    e1 = entropy_pair("alpha:one")
    x = np.array([10.0, 1e4])
    assert np.allclose(e1.v(x), x / np.log(math.e * x), rtol=1e-12)


def test_lower_partials_closed_form():
    X = [math.e, 1e6, 1e12, 1e24]
    rows = divergence_witness(fundamental_pair("psi:s"), X)
    for r in rows:
        assert r.lower == pytest.approx(2 * math.log(r.X), rel=1e-8)
        assert r.exact > r.lower
    assert rows[0].lower == pytest.approx(2.0, rel=1e-8)


def test_exact_partial_against_direct_quadrature():
    pair = fundamental_pair("psi:s")
    X = 50.0
    f = lambda x: math.log((x + 1) / (x - 1)) ** 2 * x
    ref = 2 * sum(quad(f, a, b, limit=200)[0] for a, b in [(1 + 1e-6, 1.001), (1.001, 2), (2, X)])
    assert divergence_witness(pair, [X])[0].exact == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("name,closed", [
    ("psi:llogl", lambda X: 2 * math.log(1 + math.log(X))),
    ("psi:llog2", lambda X: 2 * (1 - 1 / (1 + math.log(X)))),
])
def test_log_presets_closed_form(name, closed):
    rows = divergence_witness(fundamental_pair(name), [1e3, 1e6, 1e12])
    for r in rows:
        assert r.lower == pytest.approx(closed(r.X), rel=1e-8)
    assert rows[0].lower < rows[1].lower < rows[2].lower


def test_classification():
    assert classify(fundamental_pair("psi:s")).divergent
    v = classify(fundamental_pair("psi:llogl"))
    assert v.divergent and v.min_increment > 1.0
    b = classify(fundamental_pair("psi:llog2"))
    assert not b.divergent
    assert b.total.value == pytest.approx(2.0 / 2, rel=1e-6)   # half of 2∫₀^∞dy/(1+y)²
    assert b.total.upper - b.total.lower < 1e-3


def test_general_p_divergent():
    assert classify(fundamental_pair("psi:s", p=3.0)).divergent


def test_family_meets_support():
    c, L = interval_family()
    assert np.all((c < 1) & (c + L > -1))


def test_bump_small_intervals_capped():
    pair = fundamental_pair("psi:s")
    c, L = interval_family(-10, 1)
    # |I| ≤ 2 meeting [-1,1] stays inside [-3,3], so sqrt(ψ(1)·v) ≤ √3
    assert bump_uniformity(pair, (c, L)).B <= math.sqrt(3) + 1e-12


def test_bump_symmetric_intervals():
    pair = fundamental_pair("psi:s")
    a = np.array([2.0, 10.0, 1e6])
    r = bump_uniformity(pair, (-a, 2 * a))
    # product sqrt((1/a)·a) = 1 on [−a, a]
    assert r.B == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("name", ["psi:s", "psi:llogl", "psi:llog2"])
def test_bump_stability(name):
    b0, b1, rel = stability(fundamental_pair(name))
    assert math.isfinite(b0) and rel < 0.01


def test_lorentz_of_v_against_sorting():
    pair = entropy_pair("alpha:one")
    for c, L in [(-1.5, 4.0), (0.5, 8.0), (-30.0, 64.0)]:
        x = c + L * (np.arange(400000) + 0.5) / 400000
        vs = np.sort(pair.v(x))[::-1]
        s = (np.arange(len(vs)) + 0.5) / len(vs)
        ref_star = float(np.mean(vs * np.log(1 / s)))
        ref_mean = float(np.mean(vs))
        star, mean = lorentz_and_mean_of_v(pair, [c], [L])
        assert mean[0] == pytest.approx(ref_mean, rel=1e-4)
        assert star[0] == pytest.approx(ref_star, rel=1e-3)


def test_entropy_alpha_one():
    rep = entropy_sharpness("alpha:one")
    assert rep.c_alpha_divergent and rep.doubling_ok and rep.monotone_ok
    assert rep.bump_change < 0.01 and math.isfinite(rep.bump.B)
    p = [r.exact for r in rep.partials]
    assert p[0] < p[1] < p[2]
    assert rep.ladder_min_increment > 1.0


def test_entropy_alpha_log():
    rep = entropy_sharpness("alpha:log")
    assert rep.ladder_min_increment > 1e-3
    assert rep.partials[0].lower < rep.partials[-1].lower


def test_entropy_rejects_integrable_penalty():
    with pytest.raises(HypothesisViolated):
        entropy_pair("alpha:t")
