"""Bracketed evaluation of improper integrals of nonnegative integrands on [x0, ∞).

The grid is geometric in (1 + x − x0) and reaches x0 + 2^K. Per cell we take
the tightest bracket licensed by properties verified on the grid: monotone
decrease gives left/right Riemann sums, convexity gives midpoint/trapezoid,
and callers may add their own rigorous cell bracket. Beyond the grid the tail
is extrapolated from the decay of the octave contributions; a tail that does
not decay faster than 1/k per octave is declared divergent.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

DIVERGENCE_CUTOFF = 1e6


@dataclass(frozen=True)
class IntegralResult:
    value: float
    lower: float
    upper: float
    divergent: bool
    tail: float
    tail_exponent: float
    rigorous_cells: bool

    @property
    def rel_bracket(self) -> float:
        if self.divergent or self.value == 0:
            return 0.0
        return (self.upper - self.lower) / self.value


def _eval(h, x):
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        y = np.asarray(h(x), dtype=float)
    y = np.where(np.isnan(y), np.inf, y)
    return np.broadcast_to(y, np.shape(x)).astype(float)


def improper_integral(h: Callable[[np.ndarray], np.ndarray], x0: float = 0.0, K: int = 60,
                      step: float = 2.0 ** -11,
                      cell_bracket: Optional[Callable] = None) -> IntegralResult:
    """∫_{x0}^∞ h(x) dx for h ≥ 0; see module docstring."""
    n = int(np.ceil(K * np.log(2) / np.log1p(step)))
    y = np.expm1(np.arange(n + 1) * np.log1p(step))
    a, b = x0 + y[:-1], x0 + y[1:]
    mid = 0.5 * (a + b)
    d = b - a
    ha, hb, hm = _eval(h, a), _eval(h, b), _eval(h, mid)
    if np.any(ha < 0) or np.any(hm < 0):
        raise ValueError("integrand must be nonnegative")

    lo = np.full(n, 0.0)
    hi = np.full(n, np.inf)
    rigorous = False
    fin = np.isfinite(ha) & np.isfinite(hb) & np.isfinite(hm)
    tol = 1e-12
    decreasing = bool(np.all(hb <= ha * (1 + tol)) and np.all(hm <= ha * (1 + tol))
                      and np.all(hb <= hm * (1 + tol)))
    if decreasing:
        lo = np.maximum(lo, hb * d)
        hi = np.minimum(hi, ha * d)
        rigorous = True
    nodes = np.concatenate([a, b[-1:]])
    hn = np.concatenate([ha, hb[-1:]])
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        slope = np.diff(hn) / np.diff(nodes)
        sec = np.diff(slope)  # at interior nodes
    floor = 1e-250
    scale = np.abs(slope[1:]) + np.abs(slope[:-1])
    node_ok = np.concatenate([[True], (sec >= -1e-9 * scale) | (hn[1:-1] < floor), [True]])
    cell_convex = (fin & (ha + hb >= 2 * hm * (1 - tol)) & node_ok[:-1] & node_ok[1:])
    if np.any(cell_convex):
        lo = np.where(cell_convex, np.maximum(lo, hm * d), lo)
        hi = np.where(cell_convex, np.minimum(hi, 0.5 * (ha + hb) * d), hi)
        rigorous = rigorous or bool(np.all(cell_convex))
    if cell_bracket is not None:
        clo, chi = cell_bracket(a, b)
        lo = np.maximum(lo, np.nan_to_num(clo, nan=0.0))
        hi = np.minimum(hi, np.nan_to_num(chi, nan=np.inf))
        rigorous = True
    if not rigorous:
        lo = np.minimum(np.minimum(ha, hb), hm) * d
        hi = np.maximum(np.maximum(ha, hb), hm) * d
    hi = np.maximum(hi, lo)
    est = np.clip((ha + 4 * hm + hb) / 6 * d, lo, hi)
    est = np.where(np.isfinite(est), est, lo)

    lower = float(np.sum(lo))
    upper_fin = float(np.sum(hi))
    if lower > DIVERGENCE_CUTOFF:
        return IntegralResult(np.inf, lower, np.inf, True, np.inf, 0.0, rigorous)

    # octave contributions of the last part of the grid: x − x0 ∈ [2^k, 2^{k+1})
    k_of = np.floor(np.log2(np.maximum(a - x0, 1e-300))).astype(int)
    octs = np.arange(max(1, K - 12), K)
    c = np.array([est[k_of == k].sum() for k in octs])
    total = float(np.sum(est))
    tail, p = 0.0, np.inf
    if c[-1] > 1e-15 * max(total, 1e-300):
        pos = c > 0
        q = c[-1] / c[-2] if c[-2] > 0 else 0.0
        p = -np.polyfit(np.log(octs[pos]), np.log(c[pos]), 1)[0]
        if p <= 1.5:
            return IntegralResult(np.inf, lower, np.inf, True, np.inf, float(p), rigorous)
        if q < 0.75:
            tail = c[-1] * q / (1 - q)
        else:
            tail = c[-1] * octs[-1] / (p - 1)
    value = total + tail
    return IntegralResult(value, lower, upper_fin + tail, False, tail, float(p), rigorous)
