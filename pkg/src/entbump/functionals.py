"""Distribution functions, Lorentz norms, u* variants and A₂ / A∞ characteristics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dyadic import DyadicModel, averages, maximal_ustar_all
from .errors import DivisionByZero, InvalidPath, MidpointMismatch, NotQuasiconcave

REL_TOL = 1e-12


# -- quasiconcave profiles ----------------------------------------------------

def psi0(s):
    """ψ₀(s) = s·ln(e/s), the fundamental function of L log L; ψ₀(0)=0."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, s * (1.0 - np.log(np.where(s > 0, s, 1.0))), 0.0)
    return out if out.ndim else float(out)


class QuasiconcaveFn:
    """A quasiconcave ψ on [0,1]: closed-form callable or linear interpolation of samples."""

    def __init__(self, func: Callable | None = None, *, grid=None, values=None,
                 name: str = "psi", validate: bool = True):
        if func is None:
            grid = np.asarray(grid, float)
            values = np.asarray(values, float)
            if grid[0] > 0:
                grid = np.concatenate([[0.0], grid])
                values = np.concatenate([[0.0], values])
            self.grid, self.values = grid, values
            func = lambda s: np.interp(s, self.grid, self.values)
        else:
            self.grid, self.values = None, None
        self._f = func
        self.name = name
        if validate:
            self.validate()

    def __call__(self, s):
        return self._f(s)

    def validate(self, grid=None):
        s = self.grid[1:] if self.grid is not None else (
            np.geomspace(1e-12, 1.0, 2001) if grid is None else np.asarray(grid))
        v = np.asarray(self(s), float)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(v))))
        if np.any(v <= 0) or float(np.asarray(self(0.0))) != 0.0:
            raise NotQuasiconcave(f"{self.name}: ψ must vanish exactly at 0")
        if np.any(np.diff(v) < -tol):
            raise NotQuasiconcave(f"{self.name}: ψ not increasing")
        r = v / s
        if np.any(np.diff(r) > 1e-9 * np.abs(r[1:]) + 1e-300):
            raise NotQuasiconcave(f"{self.name}: ψ(s)/s not decreasing")
        return True


PSI0 = QuasiconcaveFn(psi0, name="psi0")
PSI_L1 = QuasiconcaveFn(lambda s: np.asarray(s, float), name="identity")


def _upper_hull(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the upper concave hull of the points (x sorted ascending)."""
    hx, hy = [], []
    for xi, yi in zip(x, y):
        while len(hx) >= 2:
            x1, y1, x2, y2 = hx[-2], hy[-2], hx[-1], hy[-1]
            # drop the middle point if it lies on or below the chord
            if (y2 - y1) * (xi - x1) <= (yi - y1) * (x2 - x1):
                hx.pop(); hy.pop()
            else:
                break
        hx.append(xi); hy.append(yi)
    return np.array(hx), np.array(hy)


def least_concave_majorant(grid, values, *, check: bool = True) -> QuasiconcaveFn:
    """Upper concave hull of a sampled quasiconcave ψ (the point (0,0) is included)."""
    grid = np.asarray(grid, float)
    values = np.asarray(values, float)
    order = np.argsort(grid)
    grid, values = grid[order], values[order]
    if check:
        QuasiconcaveFn(grid=grid, values=values, name="input")
    if grid[0] > 0:
        grid = np.concatenate([[0.0], grid])
        values = np.concatenate([[0.0], values])
    hx, hy = _upper_hull(grid, values)
    return QuasiconcaveFn(grid=hx, values=hy, name="lcm", validate=check)


# -- distribution functions -------------------------------------------------

@dataclass(frozen=True)
class DistributionFn:
    """Right-continuous step function: N(t)=levels[k] for thresholds[k-1] ≤ t < thresholds[k].

    thresholds are strictly increasing (thresholds[-1] is where N drops to 0).
    """
    thresholds: np.ndarray
    levels: np.ndarray

    @staticmethod
    def from_pairs(pairs: Sequence[Sequence[float]], *, strict: bool = True) -> "DistributionFn":
        if len(pairs) == 0:
            return DistributionFn(np.zeros(0), np.zeros(0))
        t = np.array([p[0] for p in pairs], float)
        n = np.array([p[1] for p in pairs], float)
        if np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise ValueError("thresholds must be positive and strictly increasing")
        if np.any(n < 0) or np.any(n > 1 + 1e-12):
            raise ValueError("levels must lie in [0,1]")
        if strict and np.any(np.diff(n) > 0):
            raise ValueError("levels must be decreasing")
        return DistributionFn(t, n)

    def to_pairs(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.thresholds, self.levels)]

    def widths(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.thresholds]))

    def __call__(self, t):
        t = np.asarray(t, float)
        k = np.searchsorted(self.thresholds, t, side="right")
        lv = np.concatenate([self.levels, [0.0]])
        return lv[k]

    def scale_thresholds(self, lam: float) -> "DistributionFn":
        return DistributionFn(self.thresholds * lam, self.levels.copy())


def common_grid(*Ns: DistributionFn) -> tuple[np.ndarray, list[np.ndarray]]:
    """Cell widths of the merged partition and each N's level on every cell."""
    pts = np.unique(np.concatenate([N.thresholds for N in Ns] + [np.zeros(1)]))
    widths = np.diff(pts)
    mids = pts[:-1]  # left endpoints: right-continuity gives the cell value
    return widths, [N(mids) for N in Ns]


def combine(coeffs: Sequence[float], Ns: Sequence[DistributionFn]) -> DistributionFn:
    """Σ c_k N_k on the merged partition."""
    pts = np.unique(np.concatenate([N.thresholds for N in Ns] + [np.zeros(1)]))
    total = sum(c * N(pts[:-1]) for c, N in zip(coeffs, Ns))
    return DistributionFn(pts[1:], np.asarray(total, float))


def distribution_fn(model: DyadicModel, w, I: int) -> DistributionFn:
    """Normalized distribution N(t) = |{x∈I : w(x)>t}|/|I|."""
    sl = model.leaf_slice(I)
    vals = np.asarray(w, float)[sl]
    m = model.leaf_mass[sl] / model.mass[I]
    pos = vals > 0
    vals, m = vals[pos], m[pos]
    if len(vals) == 0:
        return DistributionFn(np.zeros(0), np.zeros(0))
    uniq, inv = np.unique(vals, return_inverse=True)
    mass_at = np.bincount(inv, weights=m)
    # level on [v_{j-1}, v_j) is the mass of values ≥ v_j
    levels = np.cumsum(mass_at[::-1])[::-1]
    return DistributionFn(uniq, np.minimum(levels, 1.0))


def lorentz_norm(N: DistributionFn, psi: Callable = psi0) -> float:
    """∫₀^∞ ψ(N(t)) dt as an exact step sum."""
    if len(N.levels) == 0:
        return 0.0
    return float(np.dot(np.asarray(psi(N.levels), float), N.widths()))


def mass_functional(N: DistributionFn) -> float:
    """u(N) = ∫₀^∞ N(t) dt."""
    return float(np.dot(N.levels, N.widths())) if len(N.levels) else 0.0


def _lorentz_from_values(vals: np.ndarray, m: np.ndarray, psi=psi0) -> float:
    """Λψ norm of a simple function given leaf values and normalized masses."""
    order = np.argsort(-vals, kind="stable")
    v = vals[order]
    S = np.minimum(np.cumsum(m[order]), 1.0)
    steps = v - np.concatenate([v[1:], [0.0]])
    return float(np.dot(np.asarray(psi(S), float), steps))


def lorentz_ustar_all(model: DyadicModel, w, psi=psi0) -> np.ndarray:
    """‖w‖_{Λψ(I)} for every atom I (Lorentz-variant u* when ψ=ψ₀)."""
    w = np.asarray(w, float)
    out = np.empty(model.n_atoms)
    for a in range(model.n_atoms):
        sl = model.leaf_slice(a)
        out[a] = _lorentz_from_values(w[sl], model.leaf_mass[sl] / model.mass[a], psi)
    return out


def u_star(model: DyadicModel, w, I: int, variant: str = "lorentz") -> float:
    if variant == "lorentz":
        sl = model.leaf_slice(I)
        return _lorentz_from_values(np.asarray(w, float)[sl], model.leaf_mass[sl] / model.mass[I])
    if variant == "maximal":
        from .dyadic import maximal_function
        M = maximal_function(model, w, I)
        sl = model.leaf_slice(I)
        return float(np.dot(M[sl], model.leaf_mass[sl]) / model.mass[I])
    raise ValueError(f"unknown variant {variant!r}")


def ustar_all(model: DyadicModel, w, variant: str = "lorentz") -> np.ndarray:
    if variant == "lorentz":
        return lorentz_ustar_all(model, w)
    if variant == "maximal":
        return maximal_ustar_all(model, w)
    raise ValueError(f"unknown variant {variant!r}")


# -- concavity laws ------------------------------------------------------------

def _check_midpoint(N, N1, N2):
    widths, (a, b, c) = common_grid(N, N1, N2)
    scale = max(1.0, float(np.max(np.abs(np.concatenate([a, b, c])))) if len(a) else 1.0)
    if len(a) and np.max(np.abs(a - 0.5 * (b + c))) > 1e-12 * scale:
        raise MidpointMismatch("N is not the midpoint of N1 and N2")
    return widths, a, b, c


@dataclass(frozen=True)
class ConcavityGap:
    gap: float
    lower_bound: float        # ½ u_Δ² / u
    weaker_bound: float       # ½ (Δu)² / u
    u: float
    u_delta: float

    @property
    def holds(self) -> bool:
        scale = max(1.0, abs(self.gap))
        return (self.gap >= self.lower_bound - 1e-12 * scale
                and self.lower_bound >= self.weaker_bound - 1e-12 * scale)


def concavity_gap(N: DistributionFn, N1: DistributionFn, N2: DistributionFn) -> ConcavityGap:
    """u*(N) − ½(u*(N1)+u*(N2)) against ½u_Δ²/u, for N the midpoint of N1, N2."""
    widths, a, b, c = _check_midpoint(N, N1, N2)
    us = lambda lv: float(np.dot(psi0(lv), widths))
    gap = us(a) - 0.5 * (us(b) + us(c))
    u = float(np.dot(a, widths))
    u_delta = float(np.dot(np.abs(b - a), widths))
    du = float(np.dot(b - a, widths))
    if u <= 0:
        return ConcavityGap(gap, 0.0, 0.0, u, u_delta)
    return ConcavityGap(gap, 0.5 * u_delta ** 2 / u, 0.5 * du ** 2 / u, u, u_delta)


@dataclass(frozen=True)
class SecondDerivativeRow:
    theta: float
    d2: float       # ∫ ΔN²/N_θ = −d²u*(N_θ)/dθ²
    bound: float    # u_Δ²/u_θ
    weaker: float   # (Δu)²/u_θ


def second_derivative_check(N: DistributionFn, N1: DistributionFn, thetas) -> list[SecondDerivativeRow]:
    """Evaluate −d²u*(N+θΔN)/dθ² and its two lower bounds along the path, ΔN = N1−N."""
    widths, (a, b) = common_grid(N, N1)
    dN = b - a
    u_delta = float(np.dot(np.abs(dN), widths))
    du = float(np.dot(dN, widths))
    rows = []
    for th in np.atleast_1d(thetas):
        Nt = a + th * dN
        if np.any(Nt < -1e-15) or np.any(Nt > 1 + 1e-15):
            raise InvalidPath(f"N_θ leaves [0,1] at θ={th}")
        live = dN != 0
        if np.any(Nt[live] <= 0):
            raise InvalidPath(f"N_θ vanishes where ΔN≠0 at θ={th}")
        d2 = float(np.sum(dN[live] ** 2 / Nt[live] * widths[live]))
        ut = float(np.dot(Nt, widths))
        if ut <= 0:
            rows.append(SecondDerivativeRow(float(th), d2, 0.0, 0.0))
        else:
            rows.append(SecondDerivativeRow(float(th), d2, u_delta ** 2 / ut, du ** 2 / ut))
    return rows


# -- A₂ and Wilson A∞ ---------------------------------------------------------------

@dataclass(frozen=True)
class A2Report:
    A2: float
    Ainfty: float
    A2_atom: int
    Ainfty_atom: int

    @property
    def ordered(self) -> bool:
        return self.Ainfty <= self.A2 * (1 + 1e-12)


def a2_and_wilson(model: DyadicModel, v, u=None) -> A2Report:
    """[u,v]_{A₂}=sup⟨v⟩⟨u⟩ (u=v⁻¹ by default) and Wilson's [v]_{A∞}."""
    v = np.asarray(v, float)
    if u is None:
        if np.any(v <= 0):
            raise DivisionByZero("v has a zero leaf value; v⁻¹ undefined")
        u = 1.0 / v
    prod = averages(model, v) * averages(model, u)
    k = int(np.argmax(prod))
    av = averages(model, v)
    Ms = maximal_ustar_all(model, v)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(av > 0, Ms / np.where(av > 0, av, 1.0), 1.0)
    j = int(np.argmax(ratio))
    return A2Report(float(prod[k]), float(ratio[j]), k, j)
