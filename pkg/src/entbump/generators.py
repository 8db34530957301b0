"""Seeded random instances: models, weights, distribution functions and normalized operators."""
from __future__ import annotations

import numpy as np

from .dyadic import DyadicModel, carleson_norm, from_nested
from .functionals import DistributionFn
from .operators import (OperatorSpec, block_certificate, difference_projector, haar_shift,
                        paraproduct, paraproduct_certificate, positive_dyadic, sparse_operator)


def random_model(rng: np.random.Generator, max_depth: int = 8, max_children: int = 3,
                 max_leaves: int = 64, split_prob: float = 0.75, lopsided: float = 0.2) -> DyadicModel:
    """Random tree with Dirichlet child masses; some splits are made very uneven."""
    budget = [max_leaves - 1]

    def rec(d, m):
        if d == max_depth or budget[0] <= 0 or (d > 0 and rng.random() > split_prob):
            return m
        k = int(rng.integers(1, max_children + 1))
        k = min(k, budget[0] + 1)
        if k == 1 and rng.random() < 0.7:
            k = min(2, budget[0] + 1)
        budget[0] -= k - 1
        if k > 1 and rng.random() < lopsided:
            w = np.full(k, 1.0)
            w[int(rng.integers(k))] = 10.0 ** rng.uniform(1, 4)
        else:
            w = rng.gamma(1.0, size=k) + 1e-3
        w = w / w.sum()
        return [rec(d + 1, m * x) for x in w]

    return from_nested(rec(0, 1.0))


def random_weight(rng: np.random.Generator, model: DyadicModel, zeros: float = 0.0,
                  spread: float = 2.0) -> np.ndarray:
    """Log-normal leaf values; a fraction ``zeros`` of leaves set to 0 (never all)."""
    w = np.exp(rng.normal(0.0, spread, model.n_leaves))
    if zeros > 0:
        z = rng.random(model.n_leaves) < zeros
        if z.all():
            z[int(rng.integers(model.n_leaves))] = False
        w[z] = 0.0
    return w


def random_signed(rng: np.random.Generator, model: DyadicModel) -> np.ndarray:
    return rng.normal(size=model.n_leaves) * np.exp(rng.normal(0, 1, model.n_leaves))


def random_distribution(rng: np.random.Generator, n_steps: int | None = None,
                        thresholds: np.ndarray | None = None) -> DistributionFn:
    """Decreasing step function with levels in (0,1], level 1 on the first cell."""
    if thresholds is None:
        n = int(rng.integers(1, 7)) if n_steps is None else n_steps
        thresholds = np.cumsum(np.exp(rng.normal(0, 1.5, n)))
    n = len(thresholds)
    lv = np.sort(rng.random(n))[::-1]
    lv[0] = 1.0
    return DistributionFn(np.asarray(thresholds, float), lv)


def random_midpoint_pair(rng: np.random.Generator) -> tuple[DistributionFn, DistributionFn]:
    """Two distribution functions, sometimes on a shared threshold grid."""
    if rng.random() < 0.5:
        t = np.cumsum(np.exp(rng.normal(0, 1.5, int(rng.integers(1, 7)))))
        return random_distribution(rng, thresholds=t), random_distribution(rng, thresholds=t)
    return random_distribution(rng), random_distribution(rng)


def random_sparse_family(rng: np.random.Generator, model: DyadicModel, p: float = 0.6) -> list[int]:
    """Greedy DFS selection keeping every member's selected descendants within half its mass."""
    selected: list[int] = []
    used = np.zeros(model.n_atoms)   # mass of selected strict descendants, per selected atom
    nearest = np.full(model.n_atoms, -1)
    for a in range(model.n_atoms):
        p_sel = nearest[model.parent[a]] if model.parent[a] >= 0 else -1
        ok = rng.random() < p
        # only maximal strict sub-members count toward a member's half-mass budget
        if ok and p_sel >= 0 and used[p_sel] + model.mass[a] > 0.5 * model.mass[p_sel] * (1 + 1e-12):
            ok = False
        if ok:
            selected.append(a)
            if p_sel >= 0:
                used[p_sel] += model.mass[a]
            nearest[a] = a
        else:
            nearest[a] = p_sel
    return selected


def random_carleson(rng: np.random.Generator, model: DyadicModel, density: float = 0.7,
                    normalize: bool = False) -> np.ndarray:
    a = np.where(rng.random(model.n_atoms) < density, rng.exponential(1.0, model.n_atoms), 0.0)
    if normalize and a.any():
        a = a / carleson_norm(model, a).carleson_norm
    return a


def random_haar_shift(rng: np.random.Generator, model: DyadicModel, density: float = 0.8) -> OperatorSpec:
    blocks = {}
    for I in range(model.n_atoms):
        ch = model.children[I]
        if len(ch) < 2 or rng.random() > density:
            continue
        k = len(ch)
        P = difference_projector(model.mass[list(ch)])
        B = P @ rng.normal(size=(k, k)) @ P
        c = block_certificate(B, model, I) * model.mass[I]
        if c > 0:
            blocks[I] = B / c * rng.uniform(0.3, 1.0)
    return haar_shift(model, blocks)


def random_paraproduct(rng: np.random.Generator, model: DyadicModel, density: float = 0.8) -> OperatorSpec:
    sym = {}
    for I in range(model.n_atoms):
        ch = model.children[I]
        if len(ch) < 2 or rng.random() > density:
            continue
        m = model.mass[list(ch)]
        b = rng.normal(size=len(ch))
        sym[I] = b - np.dot(m, b) / m.sum()
    if sym:
        c = paraproduct_certificate(sym, model).normalized
        s = np.sqrt(rng.uniform(0.3, 1.0) / c) * (1 - 1e-12)
        sym = {I: b * s for I, b in sym.items()}
    return paraproduct(model, sym)


def random_operator(rng: np.random.Generator, model: DyadicModel, kind: str) -> OperatorSpec:
    if kind == "sparse":
        return sparse_operator(model, random_sparse_family(rng, model))
    if kind == "positive_dyadic":
        return positive_dyadic(model, random_carleson(rng, model))
    if kind == "haar_shift":
        return random_haar_shift(rng, model)
    if kind == "paraproduct":
        return random_paraproduct(rng, model)
    raise ValueError(f"unknown operator kind {kind!r}")
