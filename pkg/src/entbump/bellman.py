"""Bellman functions built from penalty data, the dyadic concavity inequalities, and the two embedding theorems."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bumps import PenaltyFn, _ratio
from .dyadic import DyadicModel, _as_atom_array, averages, carleson_norm
from .errors import ConvexityDataInvalid, DivergentPenalty, MidpointMismatch, NotDecreasing
from .functionals import DistributionFn, combine, common_grid, lorentz_norm, mass_functional, ustar_all
from .integrate import improper_integral


# -- step functions and m ------------------------------------------------------------

@dataclass(frozen=True)
class StepFn:
    """Decreasing step function: value h[k] on (r[k-1], r[k]] (with r[-1] = 0), zero beyond r[-1]."""
    r: np.ndarray
    h: np.ndarray
    slack: float = 0.0   # ‖φ_step‖₁ / ‖φ‖₁ − 1 when built as a majorant
    cover: float = np.inf  # majorization is guaranteed on (0, cover]

    def __call__(self, y):
        y = np.asarray(y, float)
        k = np.searchsorted(self.r, y, side="left")
        return np.concatenate([self.h, [0.0]])[k]

    @property
    def norm1(self) -> float:
        return float(np.dot(self.h, np.diff(np.concatenate([[0.0], self.r]))))


@dataclass(frozen=True)
class BellmanM:
    """m(y) = Σ_j mass_j·4/(1 + y/r_j)."""
    r: np.ndarray
    mass: np.ndarray

    def _terms(self, y):
        y = np.asarray(y, float)
        return 1.0 + np.multiply.outer(y, 1.0 / self.r)

    def __call__(self, y):
        return (4.0 / self._terms(y)) @ self.mass

    def d1(self, y):
        return -(4.0 / self._terms(y) ** 2) @ (self.mass / self.r)

    def d2(self, y):
        return (8.0 / self._terms(y) ** 3) @ (self.mass / self.r ** 2)

    def d3(self, y):
        return -(24.0 / self._terms(y) ** 4) @ (self.mass / self.r ** 3)

    def to_json(self) -> list:
        return [[float(a), float(b)] for a, b in zip(self.r, self.mass)]

    @staticmethod
    def from_json(obj) -> "BellmanM":
        arr = np.asarray(obj, float).reshape(-1, 2)
        return BellmanM(arr[:, 0], arr[:, 1])


def build_m(phi: StepFn) -> BellmanM:
    """Layer-cake construction: a downward jump of height δ at r gives an atom of mass r·δ."""
    r = np.asarray(phi.r, float)
    h = np.asarray(phi.h, float)
    if len(r) == 0:
        return BellmanM(np.ones(0), np.zeros(0))
    if np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise NotDecreasing("step breakpoints must be positive and increasing")
    if np.any(h < 0) or np.any(np.diff(h) > 0):
        raise NotDecreasing("step levels must be nonnegative and decreasing")
    jumps = h - np.concatenate([h[1:], [0.0]])
    keep = jumps > 0
    return BellmanM(r[keep], r[keep] * jumps[keep])


def _phi_exp(alpha: PenaltyFn, x):
    """φ(e^x) = 1/(e^x α(e^x)) for x ≥ 0."""
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(-np.asarray(x, float)) / alpha.alpha_exp(x)


def step_majorant(alpha: PenaltyFn, ratio: float = 2.0 ** 0.125, top: float = 2.0 ** 60) -> StepFn:
    """Upper step majorant of φ = 1/α(1) on (0,1], 1/(tα(t)) for t ≥ 1.

    Cells are (r_{k-1}, r_k] with r_k = ratio^k, and the level is φ(r_{k-1}).
    The mass of φ beyond ``top`` is carried by one extra cell at level
    φ(top), so that ‖φ_step‖₁ ≥ ‖φ‖₁ = C_α still holds; ``cover`` is where the
    pointwise majorization ends.
    """
    C = alpha.c_alpha("with_1_over_alpha1")
    if C.divergent:
        raise DivergentPenalty(f"{alpha.name}: C_α = ∞")
    K = int(np.ceil(np.log(top) / np.log(ratio)))
    xk = np.arange(K + 1) * np.log(ratio)
    r = np.exp(xk)
    h = np.concatenate([[1.0 / float(alpha(1.0))], _phi_exp(alpha, xk[:-1])])
    tail = improper_integral(lambda x: 1.0 / alpha.alpha_exp(x), x0=xk[-1])
    if tail.divergent:
        raise DivergentPenalty(f"{alpha.name}: tail of C_α diverges")
    h_top = float(_phi_exp(alpha, xk[-1]))
    if tail.upper > 0 and h_top > 0:
        r = np.append(r, r[-1] + tail.upper / h_top)
        h = np.append(h, h_top)
    h = np.minimum.accumulate(h)  # guard against round-off non-monotonicity
    st = StepFn(r, h)
    return StepFn(r, h, slack=st.norm1 / C.value - 1.0, cover=float(r[-1]))


@dataclass(frozen=True)
class Conv02Report:
    min_rel_slack: float     # min over grid of (m m″ − 2m′²)/(m m″)
    worst_y: float
    majorant_gap: float      # min over grid of (−m′ − φ)/φ where φ > 0 (≥ 0 expected)
    neg_dm_convex: bool

    @property
    def holds(self) -> bool:
        return self.min_rel_slack >= -1e-12 and self.majorant_gap >= -1e-12 and self.neg_dm_convex


def check_conv02(m: BellmanM, y_grid, phi: StepFn | None = None) -> Conv02Report:
    y = np.asarray(y_grid, float)
    mm, d1, d2 = m(y), m.d1(y), m.d2(y)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(mm * d2 > 0, (mm * d2 - 2 * d1 ** 2) / (mm * d2), 0.0)
    k = int(np.argmin(rel))
    gap = np.inf
    if phi is not None:
        # −m′ is decreasing and φ is constant on cells (r_{k-1}, r_k], so checking right endpoints suffices
        pts = np.concatenate([y, phi.r])
        ph = phi(pts)
        live = ph > 0
        gap = float(np.min((-m.d1(pts[live]) - ph[live]) / ph[live])) if np.any(live) else np.inf
    # −m′ convex ⇔ −m‴ ≥ 0
    convex = bool(np.all(-m.d3(y) >= 0))
    return Conv02Report(float(rel[k]), float(y[k]), gap, convex)


# -- the Bellman function B̃ -------------------------------------------------------------

class BellmanB:
    """B̃(f,N) = 2(f²/u)m(u*/u) + f²/u with u = u(N), u* = ‖N‖_{Λψ₀}.

    α is rescaled by κ = ‖φ_step‖₁ so that m(0) = 4 exactly; ``alpha`` is the
    rescaled penalty, whose C_α is at most 1.
    """

    def __init__(self, alpha: PenaltyFn, ratio: float = 2.0 ** 0.125):
        phi = step_majorant(alpha, ratio)
        self.kappa = phi.norm1
        self.alpha = alpha.scaled(self.kappa)
        self.phi = StepFn(phi.r, phi.h / self.kappa, phi.slack, phi.cover)
        self.m = build_m(self.phi)

    def value(self, f: float, N: DistributionFn) -> float:
        u = mass_functional(N)
        if u <= 0:
            if f != 0:
                raise ConvexityDataInvalid("f ≠ 0 with u(N) = 0")
            return 0.0
        us = lorentz_norm(N)
        q = f * f / u
        return float(2 * q * self.m(max(us / u, 1.0)) + q)

    __call__ = value

    def weight(self, N: DistributionFn) -> float:
        """1/(α(u*/u)·u*) at N."""
        u = mass_functional(N)
        us = lorentz_norm(N)
        if u <= 0:
            return 0.0
        return float(1.0 / (self.alpha(max(us / u, 1.0)) * us))


def _same(N1: DistributionFn, N2: DistributionFn) -> bool:
    _, (a, b) = common_grid(N1, N2)
    return bool(np.all(np.abs(a - b) <= 1e-12 * max(1.0, float(np.max(np.abs(a), initial=0)))))


@dataclass(frozen=True)
class GapReport:
    lhs: float
    rhs: float
    scale: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-10 * self.scale


def main_dyadic_gap(B: BellmanB, f_plus: float, f_minus: float, N_plus: DistributionFn,
                    N_minus: DistributionFn, f: float | None = None,
                    N: DistributionFn | None = None) -> GapReport:
    """½(B̃(f₊,N₊)+B̃(f₋,N₋)) − B̃(f,N) against ½(f₊−f)²/(α(u*/u)u*)."""
    fm = 0.5 * (f_plus + f_minus)
    Nm = combine([0.5, 0.5], [N_plus, N_minus])
    if f is not None and abs(f - fm) > 1e-12 * max(1.0, abs(fm)):
        raise MidpointMismatch("f is not the midpoint of f₊ and f₋")
    if N is not None and not _same(N, Nm):
        raise MidpointMismatch("N is not the midpoint of N₊ and N₋")
    bp, bm, b0 = B(f_plus, N_plus), B(f_minus, N_minus), B(fm, Nm)
    lhs = 0.5 * (bp + bm) - b0
    rhs = 0.5 * (f_plus - fm) ** 2 * B.weight(Nm)
    return GapReport(lhs, rhs, max(bp, bm, b0, 1e-300))


def extremal_beta(x, gamma, exhaustive_max: int = 12) -> tuple[np.ndarray, float]:
    """β with |β_k| ≤ 1, Σγ_kβ_k = 0 maximizing Σγ_kβ_kx_k.

    Vertices of this polytope have at most one fractional coordinate. For small
    n they are enumerated; otherwise β = sign(x − θ) with θ a γ-weighted median,
    the fractional coordinate sitting at the median.
    """
    x = np.asarray(x, float)
    g = np.asarray(gamma, float)
    n = len(x)
    if n <= exhaustive_max:
        best, bb = -np.inf, np.zeros(n)
        for j in range(n):
            if g[j] <= 0:
                continue
            others = [k for k in range(n) if k != j]
            for signs in itertools.product((-1.0, 1.0), repeat=n - 1):
                beta = np.zeros(n)
                beta[others] = signs
                bj = -np.dot(g[others], signs) / g[j]
                if abs(bj) > 1 + 1e-12:
                    continue
                beta[j] = np.clip(bj, -1, 1)
                val = float(np.dot(g * beta, x))
                if val > best:
                    best, bb = val, beta
        return bb, best
    order = np.argsort(x)
    beta = np.ones(n)
    cum = np.cumsum(g[order])
    total = cum[-1]
    j = int(np.searchsorted(cum, 0.5 * total))
    beta[order[:j]] = -1.0
    below = cum[j - 1] if j > 0 else 0.0
    above = total - cum[j]
    beta[order[j]] = (below - above) / g[order[j]] if g[order[j]] > 0 else 0.0
    return beta, float(np.dot(g * beta, x))


@dataclass(frozen=True)
class SplitReport:
    lhs: float
    rhs: float              # ¼·(Σγ|f_k−f|)²/(α(u*/u)u*)
    rhs_half: float         # ⅛·(…): what the two-point inequality yields through the split
    beta: np.ndarray
    split_value: float      # Σγβ(f_k−f) ≥ ½Σγ|f_k−f|
    two_point_lhs: float    # gap of B̃ at the split pair (f±, N±)
    scale: float

    @property
    def holds(self) -> bool:
        return self.lhs - self.rhs >= -1e-10 * self.scale

    @property
    def holds_half(self) -> bool:
        return self.lhs - self.rhs_half >= -1e-10 * self.scale


def splitting_gap(B: BellmanB, gammas: Sequence[float], fs: Sequence[float],
                  Ns: Sequence[DistributionFn]) -> SplitReport:
    """Σγ_kB̃(f_k,N_k) − B̃(f,N) against ¼·(Σγ_k|f_k−f|)²/(α(u*/u)u*), f = Σγ_kf_k, N = Σγ_kN_k."""
    g = np.asarray(gammas, float)
    fs = np.asarray(fs, float)
    if len(g) != len(fs) or len(g) != len(Ns) or len(g) == 0:
        raise ConvexityDataInvalid("need one weight, value and distribution per point")
    if np.any(g < 0) or abs(g.sum() - 1) > 1e-12:
        raise ConvexityDataInvalid("weights must be nonnegative and sum to 1")
    f = float(np.dot(g, fs))
    N = combine(list(g), list(Ns))
    vals = [B(fk, Nk) for fk, Nk in zip(fs, Ns)]
    b0 = B(f, N)
    lhs = float(np.dot(g, vals)) - b0
    w = B.weight(N)
    l1 = float(np.dot(g, np.abs(fs - f)))
    beta, sv = extremal_beta(fs - f, g)
    fp = float(np.dot(g * (1 + beta), fs))
    fm = float(np.dot(g * (1 - beta), fs))
    Np = combine(list(g * (1 + beta)), list(Ns))
    Nm = combine(list(g * (1 - beta)), list(Ns))
    two = 0.5 * (B(fp, Np) + B(fm, Nm)) - b0
    scale = max(max(vals), b0, 1e-300)
    return SplitReport(lhs, 0.25 * w * l1 ** 2, 0.125 * w * l1 ** 2, beta, sv, two, scale)


# -- embedding theorems -----------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingReport:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else np.inf
        return self.lhs / self.rhs


def _bump_weights(model, u, alpha, variant):
    """1/(α(u*/⟨u⟩)u*) per atom, 0 where u vanishes on the atom."""
    us = ustar_all(model, u, variant)
    ua = averages(model, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(us > 0, 1.0 / (alpha(_ratio(us, ua)) * np.where(us > 0, us, 1.0)), 0.0)
    return w


def embedding_sum_carleson(model: DyadicModel, u, f, a, alpha: PenaltyFn,
                           c_alpha: float | None = None) -> EmbeddingReport:
    """Σ⟨fu⟩²_I a_I|I|/(α(u*/u)u*) against 4C_α‖a‖_Carl‖f‖²_{L²(u)}, maximal-variant u*."""
    u = np.asarray(u, float)
    f = np.asarray(f, float)
    a = _as_atom_array(model, a)
    w = _bump_weights(model, u, alpha, "maximal")
    fu = averages(model, f * u)
    lhs = float(np.sum(fu ** 2 * a * model.mass * w))
    C = alpha.c_alpha().value if c_alpha is None else c_alpha
    rhs = 4 * C * carleson_norm(model, a).carleson_norm * float(np.dot(f * f * u, model.leaf_mass))
    return EmbeddingReport(lhs, rhs)


def normalized_difference_l1(model: DyadicModel, g) -> np.ndarray:
    """|I|⁻¹‖Δ_I g‖_{L¹(I)} = Σ_c (|c|/|I|)·|⟨g⟩_c − ⟨g⟩_I| per atom."""
    av = averages(model, g)
    out = np.zeros(model.n_atoms)
    for I in range(model.n_atoms):
        ch = model.children[I]
        if len(ch) > 1:
            c = list(ch)
            out[I] = float(np.dot(model.mass[c], np.abs(av[c] - av[I]))) / model.mass[I]
    return out


def embedding_sum_haar(model: DyadicModel, u, f, alpha: PenaltyFn,
                       c_alpha: float | None = None) -> EmbeddingReport:
    """Σ(|I|⁻¹‖Δ_I(fu)‖_{L¹(I)})²|I|/(α(u*/u)u*) against 36C_α‖f‖²_{L²(u)}, Lorentz u*."""
    u = np.asarray(u, float)
    f = np.asarray(f, float)
    w = _bump_weights(model, u, alpha, "lorentz")
    d = normalized_difference_l1(model, f * u)
    lhs = float(np.sum(d ** 2 * model.mass * w))
    C = alpha.c_alpha().value if c_alpha is None else c_alpha
    rhs = 36 * C * float(np.dot(f * f * u, model.leaf_mass))
    return EmbeddingReport(lhs, rhs)
