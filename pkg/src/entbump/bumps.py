"""Penalty functions, entropy bumps, Young functions and the Orlicz → Lorentz → entropy pipeline.

Penalties are stored in logarithmic coordinates so that log-type penalties can
be integrated far out (t up to e^{2^60}) without overflow:

* ``alpha_exp(x) = α(e^x)``, or
* ``gamma(t) = t·α(t)`` for penalties built from a Lorentz profile.

Young functions likewise expose ``log_phi(x) = ln Φ(e^x)`` and
``log_dphi(x) = ln Φ'(e^x)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .dyadic import DyadicModel, averages
from .errors import (DivergentPenalty, DivergentYoungTail, FloorViolated, NonconvexYoung,
                     NotConvexAfterTruncation)
from .functionals import (DistributionFn, _lorentz_from_values, _upper_hull, lorentz_norm,
                          mass_functional, psi0, ustar_all)
from .integrate import IntegralResult, improper_integral

E = np.e


def _quiet(f, *args):
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        return f(*args)


# -- penalty functions -----------------------------------------------------------

@dataclass(frozen=True)
class CAlpha:
    value: float
    lower: float
    upper: float
    divergent: bool
    convention: str

    def __float__(self):
        return float(self.value)


class PenaltyFn:
    """Penalty α on [1,∞) with t·α(t) increasing."""

    def __init__(self, *, alpha_exp: Optional[Callable] = None, gamma: Optional[Callable] = None,
                 name: str = "alpha", scale: float = 1.0, validate: bool = True):
        if (alpha_exp is None) == (gamma is None):
            raise ValueError("give exactly one of alpha_exp, gamma")
        self._alpha_exp = alpha_exp
        self._gamma = gamma
        self.name = name
        self.scale = float(scale)
        if validate:
            self.validate()

    # evaluation ---------------------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, float)
        if self._gamma is not None:
            out = _quiet(lambda: self.scale * np.asarray(self._gamma(t), float) / t)
        else:
            out = _quiet(lambda: self.scale * np.asarray(self._alpha_exp(np.log(t)), float))
        return out if np.ndim(out) else float(out)

    def alpha_exp(self, x):
        """α(e^x)."""
        x = np.asarray(x, float)
        if self._alpha_exp is not None:
            return _quiet(lambda: self.scale * np.asarray(self._alpha_exp(x), float))
        return _quiet(lambda: self.scale * np.asarray(self._gamma(np.exp(x)), float) * np.exp(-x))

    def gamma(self, t):
        """t·α(t)."""
        return _quiet(lambda: np.asarray(t, float) * self(t))

    def scaled(self, k: float) -> "PenaltyFn":
        return PenaltyFn(alpha_exp=self._alpha_exp, gamma=self._gamma, name=self.name,
                         scale=self.scale * k, validate=False)

    def validate(self, grid=None):
        x = np.linspace(0, 60, 6001) if grid is None else np.asarray(grid)
        a = self.alpha_exp(x)
        if np.any(~(a > 0)):
            raise ValueError(f"{self.name}: α must be positive")
        lg = x + np.log(a)  # ln(tα(t))
        if np.any(np.diff(lg) < -1e-12 * np.maximum(1, np.abs(lg[1:]))):
            raise ValueError(f"{self.name}: t·α(t) must be increasing")
        return True

    def is_increasing(self, grid=None) -> bool:
        x = np.linspace(0, 60, 6001) if grid is None else np.asarray(grid)
        a = self.alpha_exp(x)
        return bool(np.all(np.diff(a) >= -1e-12 * a[1:]))

    # C_α ------------------------------------------------------------------------
    @cached_property
    def _integral(self) -> IntegralResult:
        if self._gamma is not None:
            # ∫_1^∞ dt/γ(t) with γ increasing: decreasing integrand in t
            return improper_integral(lambda t: 1.0 / self.gamma(t), x0=1.0)

        def h(x):
            return 1.0 / self.alpha_exp(x)

        def bracket(a, b):
            # 1/(tα(t)) is decreasing in t; integrate it over [e^a, e^b]
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                lo = -np.expm1(a - b) / self.alpha_exp(b)
                hi = np.expm1(b - a) / self.alpha_exp(a)
            return lo, hi
        return improper_integral(h, x0=0.0, cell_bracket=bracket)

    def c_alpha(self, convention: str = "with_1_over_alpha1") -> CAlpha:
        r = self._integral
        if convention == "integral_only":
            add = 0.0
        elif convention == "with_1_over_alpha1":
            add = 1.0 / float(self(1.0))
        else:
            raise ValueError(f"unknown convention {convention!r}")
        if r.divergent:
            return CAlpha(np.inf, r.lower + add, np.inf, True, convention)
        return CAlpha(r.value + add, r.lower + add, r.upper + add, False, convention)

    def __repr__(self):
        return f"PenaltyFn({self.name}, scale={self.scale:g})"


def c_alpha(alpha: PenaltyFn, convention: str = "with_1_over_alpha1") -> CAlpha:
    return alpha.c_alpha(convention)


def normalized(alpha: PenaltyFn, convention: str = "with_1_over_alpha1") -> tuple[PenaltyFn, float]:
    """α·C_α, whose C_α equals 1, together with the factor C_α."""
    C = alpha.c_alpha(convention)
    if C.divergent:
        raise DivergentPenalty(f"{alpha.name}: C_α = ∞")
    return alpha.scaled(C.value), C.value


ALPHA_PRESETS = {
    "t": lambda: PenaltyFn(alpha_exp=np.exp, name="alpha:t"),
    "log2": lambda: PenaltyFn(alpha_exp=lambda x: (1.0 + x) ** 2, name="alpha:log2"),
    "log": lambda: PenaltyFn(alpha_exp=lambda x: 1.0 + x, name="alpha:log"),
    "one": lambda: PenaltyFn(alpha_exp=lambda x: np.ones_like(np.asarray(x, float)), name="alpha:one"),
    "sqrt": lambda: PenaltyFn(alpha_exp=lambda x: np.exp(0.5 * np.asarray(x)), name="alpha:sqrt"),
}


def parse_alpha(spec: str) -> PenaltyFn:
    """Preset names like ``alpha:t``, ``alpha:log2``, ``alpha:log``, ``alpha:one``."""
    m = re.fullmatch(r"alpha:(\w+)", spec.strip())
    if not m or m.group(1) not in ALPHA_PRESETS:
        raise ValueError(f"unknown penalty preset {spec!r}")
    return ALPHA_PRESETS[m.group(1)]()


@dataclass(frozen=True)
class RiemannCheck:
    series: float
    bound: float
    holds: bool
    terms: int


def riemann_sum_check(alpha: PenaltyFn, n_terms: int = 1 << 22) -> RiemannCheck:
    """Σ_{k≥1} 1/α(2^k) against 2∫₁^∞ dt/(tα(t))."""
    k = np.arange(1, n_terms + 1, dtype=float)
    terms = 1.0 / alpha.alpha_exp(k * np.log(2))
    terms = np.where(np.isfinite(terms), terms, 0.0)
    s = float(np.sum(terms))
    C = alpha.c_alpha("integral_only")
    bound = np.inf if C.divergent else 2 * C.value
    return RiemannCheck(s, bound, s <= bound * (1 + 1e-9), n_terms)


# -- entropy bumps -------------------------------------------------------------------

def _ratio(ustar, uavg):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(uavg > 0, ustar / np.where(uavg > 0, uavg, 1.0), 1.0)
    return np.maximum(r, 1.0)


def entropy_bumps_all(model: DyadicModel, w, alpha: PenaltyFn, variant: str = "lorentz",
                      ustar=None) -> np.ndarray:
    """E_I = w*_I·α(w*_I/⟨w⟩_I) for every atom."""
    us = ustar_all(model, w, variant) if ustar is None else ustar
    r = _ratio(us, averages(model, w))
    return us * alpha(r)


def entropy_bump(model: DyadicModel, w, I: int, alpha: PenaltyFn, variant: str = "lorentz") -> float:
    from .functionals import u_star
    from .dyadic import average
    us = u_star(model, w, I, variant)
    avg = average(model, w, I)
    r = max(us / avg, 1.0) if avg > 0 else 1.0
    return float(us * alpha(r))


@dataclass(frozen=True)
class BumpSup:
    A: float
    atom: int
    per_atom: np.ndarray


def bump_supremum(model: DyadicModel, u, v, alpha: PenaltyFn, mode: str = "two_sided",
                  variant: str = "lorentz", exponent: float = 2.0, atoms=None) -> BumpSup:
    """sup over atoms of the two-sided or one-sided bump product."""
    uavg, vavg = averages(model, u), averages(model, v)
    if mode == "two_sided":
        vals = entropy_bumps_all(model, u, alpha, variant) * entropy_bumps_all(model, v, alpha, variant)
    elif mode in ("one_sided_u", "one_sided_v"):
        w, other = (u, vavg) if mode == "one_sided_u" else (v, uavg)
        wavg = averages(model, w)
        us = ustar_all(model, w, variant)
        vals = alpha(_ratio(us, wavg)) ** exponent * us * other
    else:
        raise ValueError(f"unknown mode {mode!r}")
    idx = np.arange(model.n_atoms) if atoms is None else np.asarray(sorted(atoms), dtype=int)
    if len(idx) == 0:
        return BumpSup(0.0, -1, vals)
    k = int(idx[np.argmax(vals[idx])])
    return BumpSup(float(vals[k]), k, vals)


# -- Young functions -------------------------------------------------------------------

class YoungFn:
    """Convex increasing Φ with Φ(0)=0 and derivative access.

    ``phi``/``dphi`` act on t ≥ 0; ``log_phi``/``log_dphi`` on x = ln t.
    """

    def __init__(self, phi: Callable, dphi: Callable, *, log_phi: Optional[Callable] = None,
                 log_dphi: Optional[Callable] = None, log_ratio: Optional[Callable] = None,
                 name: str = "Phi", validate: bool = True):
        self.phi, self.dphi = phi, dphi
        self._log_ratio = log_ratio
        self._log_phi, self._log_dphi = log_phi, log_dphi
        self.name = name
        if validate:
            self.validate()

    def log_phi(self, x):
        if self._log_phi is not None:
            return _quiet(self._log_phi, np.asarray(x, float))
        return _quiet(lambda z: np.log(self.phi(np.exp(z))), np.asarray(x, float))

    def log_ratio(self, x):
        """ln(Φ(t)/t) at t = e^x, free of cancellation when a closed form is given."""
        if self._log_ratio is not None:
            return _quiet(self._log_ratio, np.asarray(x, float))
        return self.log_phi(x) - np.asarray(x, float)

    def log_dphi(self, x):
        if self._log_dphi is not None:
            return _quiet(self._log_dphi, np.asarray(x, float))
        return _quiet(lambda z: np.log(self.dphi(np.exp(z))), np.asarray(x, float))

    def validate(self):
        t = np.concatenate([[0.0], np.geomspace(1e-8, 1e12, 4001)])
        p, d = _quiet(self.phi, t), _quiet(self.dphi, t)
        if abs(float(p[0])) > 0:
            raise NonconvexYoung(f"{self.name}: Φ(0) ≠ 0")
        if np.any(np.diff(d) < -1e-10 * np.abs(d[1:])):
            raise NonconvexYoung(f"{self.name}: Φ' not increasing")
        if np.any(p[1:] > t[1:] * d[1:] * (1 + 1e-10)):
            raise NonconvexYoung(f"{self.name}: Φ(t) > tΦ'(t)")
        return True

    def doubling_constant(self) -> float:
        t = np.geomspace(1e-6, 1e12, 2001)
        return float(np.max(_quiet(self.phi, 2 * t) / _quiet(self.phi, t)))

    def tail_integral(self) -> IntegralResult:
        """∫₁^∞ dt/Φ(t), computed in x = ln t."""
        return improper_integral(lambda x: np.exp(-self.log_ratio(x)), x0=0.0)

    def __repr__(self):
        return f"YoungFn({self.name})"


def _llog(x):
    """ln(e + e^x) computed stably."""
    return np.logaddexp(1.0, x)


def young_power(p: float) -> YoungFn:
    return YoungFn(lambda t: np.asarray(t, float) ** p, lambda t: p * np.asarray(t, float) ** (p - 1),
                   log_phi=lambda x: p * x, log_ratio=lambda x: (p - 1) * np.asarray(x, float), log_dphi=lambda x: np.log(p) + (p - 1) * x,
                   name=f"young:t{p:g}")


def young_tln2() -> YoungFn:
    """Φ(t) = t·ln²(e+t)."""
    def phi(t):
        t = np.asarray(t, float)
        return t * np.log(E + t) ** 2

    def dphi(t):
        t = np.asarray(t, float)
        L = np.log(E + t)
        return L ** 2 + 2 * t * L / (E + t)

    def log_phi(x):
        return x + 2 * np.log(_llog(x))

    def log_dphi(x):
        L = _llog(x)
        frac = np.exp(x - np.logaddexp(1.0, x))  # t/(e+t)
        return 2 * np.log(L) + np.log1p(2 * frac / L)
    return YoungFn(phi, dphi, log_phi=log_phi, log_dphi=log_dphi, name="young:tln2",
                   log_ratio=lambda x: 2 * np.log(_llog(x)))


def young_loglog(eps: float = 1.0) -> YoungFn:
    """Φ(t) = t·L·(ln L)^{1+ε} with L = ln(e^e + t); behaves like t ln t (ln ln t)^{1+ε}."""
    q = 1.0 + eps
    ee = np.exp(E)

    def phi(t):
        t = np.asarray(t, float)
        L = np.log(ee + t)
        return t * L * np.log(L) ** q

    def dphi(t):
        t = np.asarray(t, float)
        L = np.log(ee + t)
        lL = np.log(L)
        return L * lL ** q + t / (ee + t) * (lL ** q + q * lL ** (q - 1))

    def Lx(x):
        return np.logaddexp(E, x)

    def log_phi(x):
        L = Lx(x)
        return x + np.log(L) + q * np.log(np.log(L))

    def log_dphi(x):
        L = Lx(x)
        lL = np.log(L)
        frac = np.exp(x - np.logaddexp(E, x))
        return np.log(L) + q * np.log(lL) + np.log1p(frac / L * (1 + q / lL))
    def log_ratio(x):
        L = Lx(x)
        return np.log(L) + q * np.log(np.log(L))
    return YoungFn(phi, dphi, log_phi=log_phi, log_dphi=log_dphi, log_ratio=log_ratio,
                   name=f"young:loglog:eps={eps:g}")


def parse_young(spec: str) -> YoungFn:
    """Preset names: young:t2, young:t3, young:t, young:tln2, young:loglog:eps=<ε>."""
    spec = spec.strip()
    m = re.fullmatch(r"young:t(\d+(?:\.\d+)?)?", spec)
    if m:
        return young_power(float(m.group(1) or 1))
    if spec == "young:tln2":
        return young_tln2()
    m = re.fullmatch(r"young:loglog(?::eps=([0-9.]+))?", spec)
    if m:
        return young_loglog(float(m.group(1) or 1.0))
    raise ValueError(f"unknown Young preset {spec!r}")


def luxemburg_norm(model: DyadicModel, w, I: int, Phi: YoungFn, rtol: float = 1e-10) -> float:
    """inf{λ>0 : ⟨Φ(|w|/λ)⟩_I ≤ 1}, by bracketed root finding on λ."""
    sl = model.leaf_slice(I)
    vals = np.abs(np.asarray(w, float)[sl])
    m = model.leaf_mass[sl] / model.mass[I]
    keep = vals > 0
    vals, m = vals[keep], m[keep]
    if len(vals) == 0:
        return 0.0
    return _luxemburg(vals, m, Phi, rtol)


def _luxemburg(vals, m, Phi: YoungFn, rtol=1e-10) -> float:
    def g(loglam):
        return float(np.dot(m, _quiet(Phi.phi, vals * np.exp(-loglam)))) - 1.0
    lo = hi = float(np.log(np.max(vals)))
    while g(hi) > 0:
        hi += 1.0
    while g(lo) <= 0:
        lo -= 1.0
    r = brentq(g, lo, hi, xtol=rtol * 0.25, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(np.exp(r))


# -- Orlicz → Lorentz --------------------------------------------------------------------

class LorentzProfile:
    """Ψ tabulated in σ = −ln s, with ψ(s) = sΨ(s); monotone linear interpolation of ln Ψ."""

    def __init__(self, sigma: np.ndarray, logPsi: np.ndarray, name: str = "Psi"):
        self.sigma = np.asarray(sigma, float)
        self.logPsi = np.asarray(logPsi, float)
        self.name = name

    def Psi_log(self, sig):
        """Ψ(e^{−σ})."""
        sig = np.asarray(sig, float)
        # linear extrapolation of ln Ψ beyond the table keeps the profile's trend
        s0, s1 = self.sigma[-2:]
        l0, l1 = self.logPsi[-2:]
        slope = (l1 - l0) / (s1 - s0)
        out = np.where(sig <= self.sigma[-1], np.interp(sig, self.sigma, self.logPsi),
                       l1 + slope * (sig - s1))
        return np.exp(out)

    def Psi(self, s):
        return self.Psi_log(-np.log(np.asarray(s, float)))

    def psi(self, s):
        s = np.asarray(s, float)
        with np.errstate(divide="ignore"):
            out = np.where(s > 0, s * self.Psi_log(-np.log(np.where(s > 0, s, 1.0))), 0.0)
        return out if out.ndim else float(out)

    def validate(self):
        if np.any(np.diff(self.logPsi) < -1e-12):
            raise ValueError("Ψ must decrease in s")
        lpsi = -self.sigma + self.logPsi
        if np.any(np.diff(lpsi) > 1e-12):
            raise ValueError("sΨ(s) must increase in s")
        return True

    def reciprocal_integral(self) -> IntegralResult:
        """∫₀¹ ds/ψ(s) = ∫₀^∞ dσ/Ψ(e^{−σ})."""
        return improper_integral(lambda s: 1.0 / self.Psi_log(s), x0=0.0)


@dataclass
class OrliczLorentz:
    profile: LorentzProfile
    tail: IntegralResult
    recip: IntegralResult
    t_range: tuple


def orlicz_to_lorentz(Phi: YoungFn, n: int = 20001) -> OrliczLorentz:
    """Ψ(s) = Φ'(t) at s = 1/(Φ(t)Φ'(t)), tabulated for s ∈ (0,1]."""
    tail = Phi.tail_integral()
    if tail.divergent:
        raise DivergentYoungTail(f"{Phi.name}: ∫^∞ dt/Φ diverges")
    sig_of = lambda x: Phi.log_phi(x) + Phi.log_dphi(x)
    x_lo = brentq(lambda x: float(sig_of(x)), -50.0, 50.0)
    x = x_lo + np.concatenate([[0.0], np.geomspace(1e-6, 2.0 ** 40, n - 1)])
    sigma = sig_of(x)
    sigma[0] = 0.0
    prof = LorentzProfile(sigma, Phi.log_dphi(x), name=f"lorentz[{Phi.name}]")
    prof.validate()
    return OrliczLorentz(prof, tail, prof.reciprocal_integral(), (float(np.exp(x_lo)), float(x[-1])))


def lorentz_of_values(vals, m, psi) -> float:
    return _lorentz_from_values(np.asarray(vals, float), np.asarray(m, float), psi)


# -- penalty from a Lorentz profile ---------------------------------------------------------

@dataclass
class AlphaFromPsi:
    alpha: PenaltyFn
    truncation: float           # σ below which Ψ was frozen (0 if none)
    Psi_log: Callable           # truncated Ψ(e^{−σ})

    def psi(self, s):
        s = np.asarray(s, float)
        with np.errstate(divide="ignore"):
            out = np.where(s > 0, s * self.Psi_log(-np.log(np.where(s > 0, s, 1.0))), 0.0)
        return out

    def jensen_slack(self, N: DistributionFn) -> float:
        """‖f‖_{Λψ} − α(‖f‖*/‖f‖₁)‖f‖* for the distribution N of f."""
        l1 = mass_functional(N)
        if l1 == 0:
            return 0.0
        star = lorentz_norm(N, psi0)
        rhs = lorentz_norm(N, self.psi)
        return float(rhs - self.alpha(max(star / l1, 1.0)) * star)

    def c_alpha_identity(self) -> IntegralResult:
        """∫₀¹ ds/(sΨ(s)) = ∫₀^∞ dσ/Ψ(e^{−σ})."""
        return improper_integral(lambda s: 1.0 / self.Psi_log(s), x0=0.0)


def _convex_from(sig, val, tol=1e-10) -> float:
    """Smallest grid σ beyond which the samples are convex."""
    slope = np.diff(val) / np.diff(sig)
    bad = np.flatnonzero(np.diff(slope) < -tol * (np.abs(slope[1:]) + np.abs(slope[:-1]) + 1e-300))
    if len(bad) == 0:
        return 0.0
    return float(sig[bad[-1] + 2])


def alpha_from_psi(Psi_log: Callable, name: str = "alpha[psi]", sigma_max: float = 2.0 ** 40) -> AlphaFromPsi:
    """α(t) = Ψ(e·e^{−t})/t, i.e. t·α(t) = Ψ(e^{1−t}).

    ``Psi_log(σ)`` is Ψ(e^{−σ}). Convexity in σ is needed on σ ≥ 0 (the range of
    ln(e/N) for N ≤ 1); if it only starts at σ = a the profile is frozen on [0, a].
    """
    sig = np.concatenate([np.linspace(0, 4, 4001)[:-1], 4 * np.geomspace(1, sigma_max / 4, 4000)])
    val = _quiet(Psi_log, sig)
    if np.any(~np.isfinite(val)) or np.any(val <= 0):
        raise ValueError("Ψ must be positive and finite")
    if np.any(np.diff(val) < -1e-12 * val[1:]):
        raise ValueError("Ψ must be decreasing in s")
    a = _convex_from(sig, val)
    if a > 0:
        base = Psi_log
        fa = float(base(a))
        Psi1 = lambda s, base=base, a=a, fa=fa: np.where(np.asarray(s) < a, fa, base(np.maximum(s, a)))
    else:
        Psi1 = Psi_log
    if _convex_from(sig, _quiet(Psi1, sig)) > 0:
        raise NotConvexAfterTruncation(name)
    pen = PenaltyFn(gamma=lambda t: Psi1(np.asarray(t, float) - 1.0), name=name)
    return AlphaFromPsi(pen, a, Psi1)


# -- Young function combinations ------------------------------------------------------------

class MinYoung(YoungFn):
    """Φ(t) = ∫₀ᵗ min(Φ₁', Φ₂'), assembled exactly from the pieces of Φ₁, Φ₂."""

    def __init__(self, P1: YoungFn, P2: YoungFn):
        self.P1, self.P2 = P1, P2
        x = np.linspace(-30, 30, 6001)
        d = P1.log_dphi(x) - P2.log_dphi(x)
        cross = [-np.inf]
        for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
            xc = brentq(lambda z: float(P1.log_dphi(z) - P2.log_dphi(z)), x[i], x[i + 1])
            cross.append(xc)
        self.cross = np.array(cross)  # in x = ln t
        c = self.cross
        if len(c) == 1:
            mids = np.array([0.0])
        else:
            mids = np.concatenate([[c[1] - 1], (c[1:-1] + c[2:]) / 2, [c[-1] + 1]])
        self.active = [0 if P1.log_dphi(m) <= P2.log_dphi(m) else 1 for m in mids]
        self.base = [0.0]
        for j in range(1, len(self.cross)):
            P = self._piece(j - 1)
            t0 = 0.0 if j == 1 else np.exp(self.cross[j - 1])
            t1 = np.exp(self.cross[j])
            self.base.append(self.base[-1] + float(P.phi(t1) - P.phi(t0)))
        super().__init__(self._phi, self._dphi, log_phi=self._log_phi, name=f"min({P1.name},{P2.name})",
                         log_dphi=lambda z: np.minimum(P1.log_dphi(z), P2.log_dphi(z)))

    def _piece(self, j):
        return self.P1 if self.active[j] == 0 else self.P2

    def _seg(self, x):
        return np.clip(np.searchsorted(self.cross, x, side="right") - 1, 0, len(self.cross) - 1)

    def _phi(self, t):
        t = np.asarray(t, float)
        out = np.zeros_like(t)
        with np.errstate(divide="ignore"):
            seg = self._seg(np.log(np.where(t > 0, t, 1e-300)))
        for j in np.unique(seg):
            P = self._piece(j)
            sel = seg == j
            t0 = 0.0 if j == 0 else np.exp(self.cross[j])
            out[sel] = self.base[j] + P.phi(t[sel]) - P.phi(t0)
        return np.where(t > 0, out, 0.0)

    def _dphi(self, t):
        return np.minimum(self.P1.dphi(t), self.P2.dphi(t))

    def _log_phi(self, x):
        x = np.asarray(x, float)
        out = np.empty_like(x)
        seg = self._seg(x)
        for j in np.unique(seg):
            P = self._piece(j)
            sel = seg == j
            if j == 0:
                out[sel] = P.log_phi(x[sel])
            else:
                t0 = np.exp(self.cross[j])
                off = self.base[j] - float(P.phi(t0))
                lp = P.log_phi(x[sel])
                out[sel] = lp + np.log1p(np.clip(off * np.exp(-lp), -1 + 1e-16, None))
        return out


def min_young(P1: YoungFn, P2: YoungFn) -> MinYoung:
    return MinYoung(P1, P2)


@dataclass(frozen=True)
class Sandwich:
    c: float
    dominated: bool


def min_young_sandwich(Pm: YoungFn, P1: YoungFn, P2: YoungFn, t=None) -> Sandwich:
    """Largest c with c·min(Φ₁,Φ₂) ≤ Φ on the grid, and Φ ≤ min(Φ₁,Φ₂)."""
    t = np.geomspace(1.0, 1e6, 2001) if t is None else np.asarray(t)
    mn = np.minimum(P1.phi(t), P2.phi(t))
    ph = Pm.phi(t)
    return Sandwich(float(np.min(ph / mn)), bool(np.all(ph <= mn * (1 + 1e-10))))


def young_llogl_floor(Phi: YoungFn, t0: float = np.exp(E), t1: float = 1e8) -> float:
    """Largest c with Φ(t) ≥ c·t ln t on a log grid of [t0, t1]."""
    if Phi.tail_integral().divergent:
        raise DivergentYoungTail(f"{Phi.name}: ∫^∞ dt/Φ diverges")
    t = np.geomspace(t0, t1, 4001)
    c = float(np.min(Phi.phi(t) / (t * np.log(t))))
    if not c > 0:
        raise FloorViolated(Phi.name)
    return c


def young_tln2_t2() -> YoungFn:
    """t·ln²t as used in the min-construction (with log form x + 2 ln x)."""
    return YoungFn(lambda t: np.asarray(t, float) * np.log(np.asarray(t, float)) ** 2,
                   lambda t: np.log(t) ** 2 + 2 * np.log(t),
                   log_phi=lambda x: x + 2 * np.log(x), name="t ln^2 t", validate=False)


@dataclass
class AlphaFromYoung:
    alpha: PenaltyFn              # final penalty (already divided by kappa)
    psi_result: AlphaFromPsi      # penalty before the Orlicz rescaling
    kappa: float                  # fitted sup ‖f‖_{Λψ̃}/‖f‖_{L^Φ} times safety factor
    calibration_sup: float
    t0: float
    c: float
    Phi: YoungFn

    def predicate_slack(self, vals, m) -> float:
        """‖f‖_{L^Φ} − α(‖f‖*/‖f‖₁)‖f‖* for a simple f on a probability space."""
        vals = np.abs(np.asarray(vals, float))
        m = np.asarray(m, float)
        l1 = float(np.dot(vals, m))
        if l1 == 0:
            return 0.0
        star = _lorentz_from_values(vals, m)
        lux = _luxemburg(vals[vals > 0], m[vals > 0], self.Phi)
        return lux - float(self.alpha(max(star / l1, 1.0))) * star

    def jensen_slack(self, vals, m) -> float:
        """Same with ‖f‖_{Λψ̃} on the right and the unrescaled penalty."""
        vals = np.abs(np.asarray(vals, float))
        m = np.asarray(m, float)
        l1 = float(np.dot(vals, m))
        if l1 == 0:
            return 0.0
        star = _lorentz_from_values(vals, m)
        lam = _lorentz_from_values(vals, m, self.psi_result.psi)
        return lam - float(self.psi_result.alpha(max(star / l1, 1.0))) * star


def _calibration_family(rng, n=400):
    fam = []
    for k in np.linspace(0, 30, 61):  # indicators of fraction e^{-k}
        s = np.exp(-k)
        fam.append((np.array([1.0, 0.0]), np.array([s, 1 - s])))
    for _ in range(n):
        j = rng.integers(2, 6)
        m = rng.dirichlet(np.ones(j) * 0.3)
        m = np.maximum(m, 1e-300)
        m /= m.sum()
        vals = np.exp(rng.uniform(-8, 8, j))
        fam.append((vals, m))
    return fam


def alpha_from_young(Phi: YoungFn, c: float = 1.0, safety: float = 2.0, seed: int = 20240611) -> AlphaFromYoung:
    """Penalty α with α(‖f‖*/‖f‖₁)‖f‖* ≤ ‖f‖_{L^Φ}, built along the comparison pipeline."""
    if Phi.tail_integral().divergent:
        raise DivergentYoungTail(f"{Phi.name}: ∫^∞ dt/Φ diverges")
    c = min(c, 1.0)
    # t0 ≥ e^e beyond which Φ(t)/(t ln t) increases (checked on a log grid)
    xs = np.linspace(E, 200.0, 20001)
    g = Phi.log_ratio(xs) - np.log(xs)
    bad = np.flatnonzero(np.diff(g) < 0)
    x0 = float(xs[bad[-1] + 1]) if len(bad) else E
    # Φ_min = min(Φ, t ln² t) in logarithmic form
    x = x0 + np.concatenate([[0.0], np.geomspace(1e-6, 2.0 ** 60, 60000)])
    log_min_ratio = np.minimum(Phi.log_ratio(x), 2 * np.log(x))  # ln(Φ_min(t)/t)
    sigma = x + 4 * np.log(x) - np.log(c)        # s = c/(t ln⁴ t)
    phi_vals = np.exp(log_min_ratio)             # Ψ₀(s) = Φ_min(t)/t
    # inverse graph (φ, σ); its least concave majorant, then invert back
    hx, hy = _upper_hull(phi_vals, sigma)
    phi0, sig0 = float(hx[0]), float(hy[0])

    def Psi_tilde(sig):
        sig = np.asarray(sig, float)
        inner = np.interp(sig, hy, hx)
        s1, s2 = hy[-2:]
        p1, p2 = hx[-2:]
        ext = p2 + (p2 - p1) / (s2 - s1) * (sig - s2)
        return np.where(sig <= sig0, phi0, np.where(sig <= hy[-1], inner, ext))

    res = alpha_from_psi(Psi_tilde, name=f"alpha[{Phi.name}]")
    fam = _calibration_family(np.random.default_rng(seed))
    ratios = []
    for vals, m in fam:
        lam = _lorentz_from_values(vals, m, res.psi)
        ratios.append(lam / _luxemburg(vals[vals > 0], m[vals > 0], Phi))
    sup = float(np.max(ratios))
    kappa = max(1.0, safety * sup)
    final = res.alpha.scaled(1.0 / kappa)
    final.name = f"alpha[{Phi.name}]"
    return AlphaFromYoung(final, res, kappa, sup, float(np.exp(x0)), c, Phi)
