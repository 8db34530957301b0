import itertools
import math

import numpy as np
import pytest
import scipy.linalg

from entbump.dyadic import from_nested, martingale_difference, refine_leaf, refine_weight, uniform
from entbump.errors import NormalizationViolated
from entbump.generators import (random_haar_shift, random_model, random_operator, random_paraproduct,
                                random_weight)
from entbump.operators import (adjoint_matrix, apply, block_certificate, dense_norm, haar_shift,
                               operator_matrix, paraproduct, paraproduct_certificate,
                               positive_dyadic, power_norm, sparse_operator, weighted_norm)


def best_constant(T, m, u, v):
    """sqrt of the top generalized eigenvalue of ∫|T(uf)|²v against ∫|f|²u."""
    A = T * u[None, :]
    lhs = A.T @ np.diag(v * m) @ A
    rhs = np.diag(u * m)
    return math.sqrt(max(scipy.linalg.eigh(lhs, rhs, eigvals_only=True)[-1], 0.0))


def test_sparse_examples():
    m = uniform(2, 1)
    assert np.allclose(apply(sparse_operator(m, [0]), m, np.ones(2)), [1, 1])
    assert np.allclose(apply(sparse_operator(m, [0, 1]), m, np.ones(2)), [2, 1])
    with pytest.raises(NormalizationViolated):
        sparse_operator(m, [0, 1, 2])


def test_haar_identity_block():
    m = uniform(2, 1)
    op = haar_shift(m, {0: np.eye(2)})
    assert np.allclose(apply(op, m, np.array([1.0, 3.0])), [-1.0, 1.0])
    assert op.certificate == pytest.approx(1.0)


def test_block_certificate_extreme_points(rng):
    for _ in range(30):
        k = int(rng.integers(2, 5))
        masses = rng.dirichlet(np.ones(k))
        m = from_nested(list(masses))
        B = rng.normal(size=(k, k))
        P = np.eye(k) - np.outer(np.ones(k), masses)
        B = P @ B @ P
        # brute force: random mean-zero f, g normalized in L¹
        best = 0.0
        for _ in range(4000):
            f = P @ rng.normal(size=k)
            g = P @ rng.normal(size=k)
            f /= np.dot(masses, np.abs(f))
            g /= np.dot(masses, np.abs(g))
            best = max(best, float(np.dot(masses, (B @ f) * g)))
        cert = block_certificate(B, m, 0)
        assert best <= cert * (1 + 1e-9)
        assert best >= 0.5 * cert
        assert block_certificate(2 * B, m, 0) == pytest.approx(2 * cert)
    assert block_certificate(np.zeros((2, 2)), uniform(2, 1), 0) == 0.0


def test_quarter_multiplier_passes():
    m = uniform(2, 1)
    assert block_certificate(0.25 * np.eye(2), m, 0) <= 1.0
    haar_shift(m, {0: 0.25 * np.eye(2)})
    with pytest.raises(NormalizationViolated):
        haar_shift(m, {0: 1.5 * np.eye(2)})


def test_weighted_norm_examples():
    m = uniform(2, 1)
    op = sparse_operator(m, [0])
    assert weighted_norm(op, m, np.ones(2), np.ones(2)).norm == pytest.approx(1.0, rel=1e-9)
    assert weighted_norm(op, m, np.full(2, 4.0), np.ones(2)).norm == pytest.approx(2.0, rel=1e-9)
    op2 = sparse_operator(m, [0, 1])
    T = np.array([[1.5, 0.5], [0.5, 0.5]])  # g ↦ ⟨g⟩ + ⟨g⟩_left 1_left, leaf basis
    K = np.sqrt(0.5) * T * np.sqrt(2.0)
    expect = np.linalg.svd(K, compute_uv=False)[0]
    assert weighted_norm(op2, m, np.ones(2), np.ones(2)).norm == pytest.approx(expect, rel=1e-9)


def test_norm_matches_generalized_eigenproblem(rng):
    for kind in ("sparse", "positive_dyadic", "haar_shift", "paraproduct"):
        for _ in range(10):
            m = random_model(rng, max_depth=5)
            op = random_operator(rng, m, kind)
            u = random_weight(rng, m) + 1e-3
            v = random_weight(rng, m) + 1e-3
            T = operator_matrix(op, m)
            got = weighted_norm(op, m, u, v).norm
            assert got == pytest.approx(best_constant(T, m.leaf_mass, u, v), rel=1e-8)


def test_apply_linear(rng):
    m = random_model(rng, max_depth=5)
    op = random_haar_shift(rng, m)
    f, g = rng.normal(size=m.n_leaves), rng.normal(size=m.n_leaves)
    assert np.allclose(apply(op, m, 2 * f - 3 * g), 2 * apply(op, m, f) - 3 * apply(op, m, g))


def test_positive_dyadic_monotone(rng):
    m = random_model(rng, max_depth=5)
    op = positive_dyadic(m, rng.random(m.n_atoms))
    assert np.all(apply(op, m, rng.random(m.n_leaves)) >= 0)


def test_haar_shift_applies_blocks_to_differences(rng):
    m = random_model(rng, max_depth=4)
    op = random_haar_shift(rng, m)
    g = rng.normal(size=m.n_leaves)
    expect = np.zeros(m.n_leaves)
    for I, B in op.data.items():
        d = martingale_difference(m, g, I)
        dvals = np.array([d[m.leaf_lo[c]] for c in m.children[I]])
        out = B @ dvals
        for k, c in enumerate(m.children[I]):
            expect[m.leaf_slice(c)] += out[k]
    assert np.allclose(apply(op, m, g), expect)


def test_refinement_invariance(rng):
    for kind in ("sparse", "haar_shift", "paraproduct"):
        m = random_model(rng, max_depth=4)
        op = random_operator(rng, m, kind)
        u, v = random_weight(rng, m) + 0.1, random_weight(rng, m) + 0.1
        n0 = weighted_norm(op, m, u, v).norm
        leaf = int(m.leaves[-1])
        m2, amap = refine_leaf(m, leaf)
        data = op.to_json()
        if kind == "sparse":
            data["data"] = [int(amap[a]) for a in data["data"]]
        else:
            data["data"] = {str(int(amap[int(a)])): b for a, b in data["data"].items()}
        from entbump.operators import OperatorSpec
        op2 = OperatorSpec.from_json(data, m2)
        n1 = weighted_norm(op2, m2, refine_weight(m, u, leaf), refine_weight(m, v, leaf)).norm
        assert n1 == pytest.approx(n0, rel=1e-8)


def test_adjoint_duality(rng):
    for _ in range(10):
        m = random_model(rng, max_depth=5)
        op = positive_dyadic(m, rng.random(m.n_atoms))
        T = operator_matrix(op, m)
        assert np.allclose(adjoint_matrix(T, m), T)
        u, v = random_weight(rng, m) + 0.1, random_weight(rng, m) + 0.1
        a = weighted_norm(op, m, u, v).norm
        b = weighted_norm(op, m, v, u, T=adjoint_matrix(T, m)).norm
        assert a == pytest.approx(b, rel=1e-8)


def test_power_iteration_matches_svd(rng):
    for _ in range(50):
        K = rng.normal(size=(12, 12))
        assert power_norm(K).norm == pytest.approx(dense_norm(K), rel=1e-9)


def test_paraproduct_certificates():
    m = uniform(2, 1)
    assert paraproduct_certificate({}, m).normalized == 0.0
    assert paraproduct_certificate({0: np.array([1.0, -1.0])}, m).normalized == pytest.approx(1.0)
    eps = 1e-3
    lop = from_nested([1 - eps, eps])
    b = np.array([-eps, 1 - eps])  # mean zero, sup norm about 1
    c = paraproduct_certificate({0: b}, lop)
    assert c.normalized > 100 * c.classical
    with pytest.raises(NormalizationViolated):
        paraproduct(m, {0: np.array([1.0, 1.0])})


def test_paraproduct_applies_average_times_symbol(rng):
    m = random_model(rng, max_depth=4)
    op = random_paraproduct(rng, m)
    g = rng.normal(size=m.n_leaves)
    expect = np.zeros(m.n_leaves)
    for I, b in op.data.items():
        sl = m.leaf_slice(I)
        avg = np.dot(g[sl], m.leaf_mass[sl]) / m.mass[I]
        for k, c in enumerate(m.children[I]):
            expect[m.leaf_slice(c)] += avg * b[k]
    assert np.allclose(apply(op, m, g), expect)
