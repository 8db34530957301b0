"""Continuum counterexamples: bounded bumps with a divergent Hilbert-transform testing integral.

Throughout u = 1_{[-1,1]} and the Hilbert kernel is 1/(x−y) with no 1/π factor.
Integrals over |x| ≥ 1 are taken in y = ln|x|, where the kernels stay bounded.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .bumps import PenaltyFn, parse_alpha
from .errors import HypothesisViolated, QuadratureFailure, SingularPoint
from .integrate import IntegralResult, improper_integral

QUAD_RTOL = 1e-8
EPS = 1e-6


# -- fundamental functions, in the variable y = -ln s -----------------------------------

@dataclass(frozen=True)
class Fundamental:
    """ψ on (0, 1] given through R(y) = ψ(e^{-y})·e^{y} = ψ(s)/s (increasing in y)."""
    name: str
    R: Callable

    def __call__(self, s):
        s = np.asarray(s, float)
        return s * self.R(-np.log(s))


PSI_PRESETS = {
    "s": Fundamental("psi:s", lambda y: np.ones_like(np.asarray(y, float))),
    "llogl": Fundamental("psi:llogl", lambda y: 1.0 + np.asarray(y, float)),
    "llog2": Fundamental("psi:llog2", lambda y: (1.0 + np.asarray(y, float)) ** 2),
}


def parse_psi(spec: str) -> Fundamental:
    m = re.fullmatch(r"psi:(\w+)", spec.strip())
    if not m or m.group(1) not in PSI_PRESETS:
        raise ValueError(f"unknown fundamental-function preset {spec!r}")
    return PSI_PRESETS[m.group(1)]


def hilbert_of_indicator(x):
    """H(1_{[-1,1]})(x) = ln|(x+1)/(x−1)|."""
    x = np.asarray(x, float)
    if np.any(np.abs(x) == 1):
        raise SingularPoint("the transform is singular at |x| = 1")
    out = np.log(np.abs((x + 1) / (x - 1)))
    return out if out.ndim else float(out)


def _hilbert_scaled(y):
    """2·atanh(e^{-y})·e^{y} = |x|·H(1_{[-1,1]})(x) at |x| = e^y."""
    y = np.asarray(y, float)
    s = np.exp(-y)
    return 2.0 * np.arctanh(s) / s


# -- weight pairs ----------------------------------------------------------------------

@dataclass
class ContinuumWeightPair:
    construction: str                 # fundamental_psi | entropy_alpha | general_p
    p: float
    log_lower: Callable = field(repr=False)  # y ↦ ln(e^{-(p-1)y}·v(e^y)) for y ≥ 0
    v_inside: float = 1.0
    psi: Fundamental | None = None
    alpha: PenaltyFn | None = None
    beta: PenaltyFn | None = None

    @property
    def p_dual(self) -> float:
        return self.p / (self.p - 1)

    def v(self, x):
        x = np.abs(np.asarray(x, float))
        with np.errstate(divide="ignore"):
            y = np.log(np.maximum(x, 1.0))
        with np.errstate(over="ignore"):
            out = np.where(x >= 1, np.exp(self.log_v_y(y)), self.v_inside)
        return out if out.ndim else float(out)

    def log_v_y(self, y):
        return self.log_lower(y) + (self.p - 1) * np.asarray(y, float)

    def u(self, x):
        x = np.asarray(x, float)
        return (np.abs(x) <= 1).astype(float)


def fundamental_pair(psi: Fundamental | str, p: float = 2.0) -> ContinuumWeightPair:
    """v = max{1/ψ(1), 1/ψ(1/|x|)}^{p/p′}; for p = 2 this is 1/ψ(1/|x|) outside [-1,1]."""
    psi = parse_psi(psi) if isinstance(psi, str) else psi
    q = p - 1.0  # p/p′
    v1 = float(1.0 / psi(1.0)) ** q

    def log_lower(y):
        return -q * np.log(psi.R(np.asarray(y, float)))

    tag = "fundamental_psi" if p == 2 else "general_p"
    return ContinuumWeightPair(tag, p, log_lower, v1, psi=psi)


def entropy_pair(alpha: PenaltyFn | str, beta: PenaltyFn | str = "alpha:t",
                 t_max: float = 1e3) -> ContinuumWeightPair:
    """v(x) = |x|/(ln(e|x|)α(ln(e|x|))) for |x| ≥ 1.

    Requires ∫dt/(tα) = ∞ and e^t/(tα(t)) increasing for large t. Where that
    function is not yet increasing near t = 1, v is frozen at its value at the
    point where monotonicity sets in, which keeps v increasing in |x|.
    """
    alpha = parse_alpha(alpha) if isinstance(alpha, str) else alpha
    beta = parse_alpha(beta) if isinstance(beta, str) else beta
    C = alpha.c_alpha("integral_only")
    if not C.divergent:
        raise HypothesisViolated(f"{alpha.name}: ∫dt/(tα(t)) converges (≈{C.value:.6g})")
    t = np.exp(np.linspace(0.0, np.log(t_max), 20001))
    g = t - np.log(t * alpha(t))          # ln(e^t/(tα(t)))
    bad = np.flatnonzero(np.diff(g) < 0)
    if len(bad) and bad[-1] > 0.9 * len(t):
        raise HypothesisViolated("e^t/(tα(t)) is not eventually increasing")
    t_h = float(t[bad[-1] + 1]) if len(bad) else 1.0
    y_h = t_h - 1.0   # t = ln(e|x|) = 1 + y

    def log_lower(y):
        y = np.asarray(y, float)
        z = np.maximum(y, y_h)
        return (z - y) - np.log((1.0 + z) * alpha.alpha_exp(np.log1p(z)))

    pair = ContinuumWeightPair("entropy_alpha", 2.0, log_lower, float(np.exp(log_lower(y_h) + y_h)),
                               alpha=alpha, beta=beta)
    pair.freeze_y = y_h
    return pair


# -- testing integrals -----------------------------------------------------------------

def _lower_kernel(pair: ContinuumWeightPair):
    """y ↦ e^{-(p-1)y}·v(e^y): the integrand of 2∫|x|^{-p}v dx after x = e^y."""

    def h(y):
        y = np.asarray(y, float)
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(pair.log_lower(y))
    return h


def _exact_kernel(pair: ContinuumWeightPair):
    """y ↦ |H1(e^y)|^p·v(e^y)·e^y."""
    p = pair.p
    low = _lower_kernel(pair)

    def h(y):
        return _hilbert_scaled(y) ** p * low(y)
    return h


def _quad(h, a, b) -> float:
    """∫_a^b h on geometric sub-ranges; raises QuadratureFailure when scipy cannot reach the tolerance."""
    if b <= a:
        return 0.0
    knots = [a]
    x = max(a, 0.0) + 1.0
    while x < b:
        knots.append(x)
        x *= 2
    knots.append(b)
    total, err = 0.0, 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        val, e = integrate.quad(lambda t: float(h(t)), lo, hi, epsrel=QUAD_RTOL * 1e-2,
                                epsabs=0.0, limit=500)
        total += val
        err += e
    if err > QUAD_RTOL * max(abs(total), 1e-300):
        raise QuadratureFailure(f"quadrature error {err:.3g} on [{a}, {b}]")
    return total


@dataclass(frozen=True)
class WitnessRow:
    X: float
    lower: float      # 2∫_1^X |x|^{-p} v dx
    exact: float      # 2∫_{1+ε}^X |H1|^p v dx


def divergence_witness(pair: ContinuumWeightPair, cutoffs) -> list[WitnessRow]:
    """Partial testing integrals at increasing cutoffs X (both half-lines, hence the factor 2)."""
    low, ex = _lower_kernel(pair), _exact_kernel(pair)
    y0 = np.log1p(EPS)
    rows = []
    acc_l = acc_e = 0.0
    prev = 0.0
    for X in sorted(float(c) for c in cutoffs):
        yX = np.log(X)
        acc_l += _quad(low, prev, yX)
        acc_e += _quad(ex, max(prev, y0), yX)
        prev = yX
        rows.append(WitnessRow(X, 2 * acc_l, 2 * acc_e))
    return rows


@dataclass(frozen=True)
class Verdict:
    divergent: bool
    total: IntegralResult            # ∫_0^∞ of the lower-bound kernel, with bracket
    ladder: list                     # (Y, increment over [Y, 2Y]) in y = ln X
    min_increment: float

    @property
    def label(self) -> str:
        return "divergent" if self.divergent else "bounded"


def classify(pair: ContinuumWeightPair, y_start: float = 8.0, steps: int = 50,
             min_increment: float = 1e-3) -> Verdict:
    """Divergence of the lower-bound testing integral.

    Increments over y ∈ [Y, 2Y] (that is, X → X²) are computed along the ladder
    Y = y_start·2^k. For ∫_0^1 ds/ψ = ∞ they stay bounded below; for
    integrable ψ they decay geometrically and the full integral is bracketed.
    """
    low = _lower_kernel(pair)
    total = improper_integral(low, x0=0.0)
    ladder = []
    Y = y_start
    for _ in range(steps):
        inc = 2 * _fixed_quad(low, Y, 2 * Y)
        ladder.append((Y, inc))
        Y *= 2
    incs = np.array([i for _, i in ladder])
    divergent = bool(total.divergent) and float(incs.min()) > min_increment
    return Verdict(divergent, total, ladder, float(incs.min()))


def _fixed_quad(h, a, b, n: int = 4096) -> float:
    """Composite Gauss–Legendre on a geometric split of [a, b]; used far out where scipy's quad is slow."""
    xg, wg = np.polynomial.legendre.leggauss(16)
    edges = np.geomspace(a, b, n // 16 + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (hi - lo) * xg[None, :] + 0.5 * (hi + lo)
    return float(np.sum(0.5 * (hi - lo) * wg[None, :] * h(pts)))


# -- bump uniformity over an interval family -----------------------------------------------

def interval_family(j_min: int = -10, j_max: int = 40, step_shift: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Intervals [c, c+L], L = 2^j, c on the grid L·2^{-step_shift}·ℤ, meeting [-1, 1]."""
    cs, Ls = [], []
    for j in range(j_min, j_max + 1):
        L = 2.0 ** j
        h = L * 2.0 ** -step_shift
        k = np.arange(np.floor((-1 - L) / h), np.ceil(1 / h) + 1)
        c = k * h
        keep = (c < 1) & (c + L > -1)
        cs.append(c[keep])
        Ls.append(np.full(keep.sum(), L))
    return np.concatenate(cs), np.concatenate(Ls)


def _u_fraction(c, L):
    return np.clip(np.minimum(c + L, 1.0) - np.maximum(c, -1.0), 0.0, None) / L


def _max_abs(c, L):
    return np.maximum(np.abs(c), np.abs(c + L))


@dataclass(frozen=True)
class BumpReport:
    B: float
    worst: tuple          # (c, L)
    n_intervals: int


def bump_uniformity(pair: ContinuumWeightPair, family=None) -> BumpReport:
    """sup over the family of ‖u‖_{X(I)}^{1/p′}·sup_I v^{1/p} with ‖u‖_{X(I)} = ψ(|I∩[-1,1]|/|I|)."""
    if pair.psi is None:
        raise ValueError("bump_uniformity needs a fundamental-function pair")
    c, L = interval_family() if family is None else family
    s = _u_fraction(c, L)
    ok = s > 0
    un = np.zeros_like(s)
    un[ok] = pair.psi(s[ok])
    vs = pair.v(_max_abs(c, L))
    prod = un ** (1 / pair.p_dual) * vs ** (1 / pair.p)
    k = int(np.argmax(prod))
    return BumpReport(float(prod[k]), (float(c[k]), float(L[k])), len(c))


def stability(pair: ContinuumWeightPair, fn=None, finer: bool = False) -> tuple[float, float, float]:
    """(B, B on the family grown by one dyadic scale at each end, relative change).

    With ``finer`` the translate step is halved as well; the grid supremum then
    moves toward the true supremum, which is not attained at any finite interval.
    """
    fn = bump_uniformity if fn is None else fn
    b0 = fn(pair, interval_family()).B
    b1 = fn(pair, interval_family(-11, 41, 4 if finer else 3)).B
    return b0, b1, abs(b1 - b0) / b0


# -- entropy construction ------------------------------------------------------------------

_LAG_X, _LAG_W = np.polynomial.laguerre.laggauss(80)
_LEG_X, _LEG_W = np.polynomial.legendre.leggauss(80)


def _abs_quantile(c, L, s):
    """r(s) with |{x ∈ I : |x| > r}| = s|I| for I = [c, c+L] (broadcast over s)."""
    a, b = np.minimum(np.abs(c), np.abs(c + L)), np.maximum(np.abs(c), np.abs(c + L))
    straddle = (c < 0) & (c + L > 0)
    m = s * L
    # one-sided: |x| ranges over [a, b] with density 1
    r_one = b - m
    # straddling: density 1 on (short, long], density 2 on [0, short]
    short = np.where(straddle, a, 0.0)
    long_ = b
    r_two = np.where(m <= long_ - short, long_ - m, short - (m - (long_ - short)) / 2)
    return np.where(straddle, r_two, r_one)


def lorentz_and_mean_of_v(pair: ContinuumWeightPair, c, L) -> tuple[np.ndarray, np.ndarray]:
    """(‖v‖_{Λψ₀(I)}, ⟨v⟩_I) for I = [c, c+L]: ∫₀¹ v*(s)ln(1/s)ds and ∫₀¹ v*(s)ds.

    v is even and increasing in |x|, so its decreasing rearrangement is v(r(s)).
    The ln(1/s) weight is handled by s = e^{-w} and Gauss–Laguerre nodes.
    """
    c = np.asarray(c, float)[:, None]
    L = np.asarray(L, float)[:, None]
    s_lag = np.exp(-_LAG_X)[None, :]
    vstar = np.sum(pair.v(_abs_quantile(c, L, s_lag)) * _LAG_X[None, :] * _LAG_W[None, :], axis=1)
    s_leg = 0.5 * (_LEG_X + 1)[None, :]
    mean = 0.5 * np.sum(pair.v(_abs_quantile(c, L, s_leg)) * _LEG_W[None, :], axis=1)
    return vstar, mean


def psi0(s):
    s = np.asarray(s, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0, s * np.log(np.e / np.where(s > 0, s, 1.0)), 0.0)


def entropy_bump_products(pair: ContinuumWeightPair, family=None) -> BumpReport:
    """sup over the family of α(u*/u)u*·v*β(v*/v), Lorentz ψ₀ norms on I."""
    c, L = interval_family() if family is None else family
    s = _u_fraction(c, L)
    ok = s > 0
    c, L, s = c[ok], L[ok], s[ok]
    us, ua = psi0(s), s
    vstar, vmean = lorentz_and_mean_of_v(pair, c, L)
    ru = np.maximum(us / ua, 1.0)
    rv = np.maximum(vstar / vmean, 1.0)
    prod = pair.alpha(ru) * us * vstar * pair.beta(rv)
    k = int(np.argmax(prod))
    return BumpReport(float(prod[k]), (float(c[k]), float(L[k])), len(c))


@dataclass(frozen=True)
class EntropyReport:
    c_alpha_divergent: bool
    bump: BumpReport
    bump_change: float
    partials: list
    ladder_min_increment: float
    doubling_ok: bool
    monotone_ok: bool


def entropy_sharpness(alpha: PenaltyFn | str, beta: PenaltyFn | str = "alpha:t",
                      cutoffs=(1e3, 1e6, 1e12)) -> EntropyReport:
    pair = entropy_pair(alpha, beta)
    bump = entropy_bump_products(pair)
    b1 = entropy_bump_products(pair, interval_family(-11, 41))
    rows = divergence_witness(pair, cutoffs)
    # X ↦ 2∫_1^{1+ln X} dt/(tα(t)): increments over t ∈ [T, 2T] stay bounded below
    h = lambda y: 1.0 / pair.alpha.alpha_exp(y)   # in y = ln t
    incs = [2 * _fixed_quad(h, np.log(T), np.log(2 * T)) for T in 2.0 ** np.arange(3, 60)]
    x = np.geomspace(1, 1e12, 2001)
    vv = pair.v(x)
    doubling = bool(np.all(vv <= 2 * pair.v(2 * x) * (1 + 1e-12)))
    mono = bool(np.all(np.diff(vv) >= -1e-12 * vv[1:])) and bool(np.allclose(pair.v(-x), vv))
    return EntropyReport(True, bump, abs(b1.B - bump.B) / bump.B, rows, float(min(incs)), doubling, mono)
