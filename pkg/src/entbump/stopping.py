"""Sawyer testing, stopping moments for sparse operators, the one-sided bump verifier and one-weight bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bumps import PenaltyFn, _ratio, c_alpha
from .dyadic import DyadicModel, averages, maximal_ustar_all
from .errors import DivisionByZero, HypothesisViolated
from .functionals import a2_and_wilson, ustar_all
from .operators import OperatorSpec, operator_matrix, weighted_matrix, power_norm

SAWYER_K = (8 * (2 + np.sqrt(2))) ** 2
C1 = 2.0 / (1.0 - 2.0 ** -0.5) ** 2
REL = 1e-10


def coefficients(op: OperatorSpec, model: DyadicModel) -> np.ndarray:
    """a_I per atom for sparse (a_I = 1 on the family) and positive dyadic operators."""
    a = np.zeros(model.n_atoms)
    if op.kind == "sparse":
        a[list(op.data)] = 1.0
    elif op.kind == "positive_dyadic":
        for I, x in op.data.items():
            a[int(I)] = x
    else:
        raise ValueError("testing conditions apply to positive dyadic operators")
    return a


def _indicator(model, I):
    c = np.zeros(model.n_leaves)
    c[model.leaf_slice(I)] = 1.0
    return c


# -- Sawyer testing ---------------------------------------------------------------------

@dataclass(frozen=True)
class SawyerReport:
    S: float
    atom: int
    side: str     # "u" for ∫_I|T(1_I u)|²v, "v" for the dual
    ratios_u: np.ndarray = field(repr=False)
    ratios_v: np.ndarray = field(repr=False)


def sawyer_constant(op: OperatorSpec, model: DyadicModel, u, v) -> SawyerReport:
    """sup over atoms of ∫_I|T(1_I u)|²v/(⟨u⟩_I|I|) and the same with u, v swapped."""
    coefficients(op, model)
    T = operator_matrix(op, model)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    m = model.leaf_mass

    def side(w, other):
        out = np.zeros(model.n_atoms)
        wint = averages(model, w) * model.mass
        for I in range(model.n_atoms):
            if wint[I] <= 0:
                continue
            sl = model.leaf_slice(I)
            g = T[:, sl] @ w[sl]
            out[I] = float(np.dot(g[sl] ** 2 * other[sl], m[sl])) / wint[I]
        return out

    ru, rv = side(u, v), side(v, u)
    iu, iv = int(np.argmax(ru)), int(np.argmax(rv))
    if ru[iu] >= rv[iv]:
        return SawyerReport(float(ru[iu]), iu, "u", ru, rv)
    return SawyerReport(float(rv[iv]), iv, "v", ru, rv)


@dataclass(frozen=True)
class TransferReport:
    norm_sq: float
    bound: float
    S: float

    @property
    def holds(self) -> bool:
        return self.norm_sq <= self.bound * (1 + REL) + 1e-300


def sawyer_transfer_check(op: OperatorSpec, model: DyadicModel, u, v) -> TransferReport:
    """‖f ↦ T(fu)‖²_{L²(u)→L²(v)} against K·S with K = (8(2+√2))²."""
    S = sawyer_constant(op, model, u, v).S
    K = weighted_matrix(operator_matrix(op, model), model, u, v)
    n = power_norm(K).norm
    return TransferReport(n * n, SAWYER_K * S, S)


# -- stopping moments ---------------------------------------------------------------------

@dataclass
class StoppingForest:
    I0: int
    family: list[int]                     # Q(I₀)
    generations: list[list[int]]          # G_0 = [I₀], G_1, …
    children: dict[int, list[int]]        # J ↦ G*(J)
    E: dict[int, list[int]]               # J ↦ E(J)
    U: dict[int, np.ndarray]              # J ↦ U_J on leaves

    @property
    def stopping(self) -> list[int]:
        return [J for g in self.generations for J in g]

    def partition_ok(self, model: DyadicModel) -> bool:
        """E(J) over J ∈ G covers Q(I₀) with every member counted exactly once."""
        seen = [I for J in self.stopping for I in self.E[J]]
        return sorted(seen) == sorted(self.family) and len(seen) == len(set(seen))


def build_stopping_forest(model: DyadicModel, u, I0: int, family) -> StoppingForest:
    """Stopping moments: G*(J) are the maximal members I ⊊ J of Q with ⟨u⟩_I ≥ 2⟨u⟩_J."""
    u = np.asarray(u, float)
    ua = averages(model, u)
    if ua[I0] <= 0:
        raise DivisionByZero("⟨u⟩ vanishes on the starting atom")
    fam = sorted(set(int(I) for I in family if model.contains(I0, int(I))))
    in_fam = np.zeros(model.n_atoms, bool)
    in_fam[fam] = True

    def stops(J):
        out, thr = [], 2.0 * ua[J]
        stack = list(model.children[J])
        while stack:
            I = stack.pop()
            if in_fam[I] and ua[I] >= thr * (1 - 1e-14):
                out.append(I)   # maximal: do not descend
            else:
                stack.extend(model.children[I])
        return sorted(out)

    gens, kids = [[I0]], {}
    while gens[-1]:
        nxt = []
        for J in gens[-1]:
            kids[J] = stops(J)
            nxt.extend(kids[J])
        gens.append(sorted(nxt))
    gens.pop()

    E, U = {}, {}
    for J in (J for g in gens for J in g):
        blocked = set()
        for I in kids[J]:
            blocked.update(model.subtree(I))
        E[J] = [I for I in fam if model.contains(J, I) and I not in blocked]
        Uj = np.zeros(model.n_leaves)
        for I in E[J]:
            Uj[model.leaf_slice(I)] += ua[I]
        U[J] = Uj
    return StoppingForest(I0, fam, gens, kids, E, U)


@dataclass(frozen=True)
class UJReport:
    A1: float
    per_J_ratio: float          # max ‖U_J‖²/(C₁A₁⟨u⟩_J|J|)
    aggregate: float            # Σ_J‖U_J‖²_{L²(v)}
    aggregate_scale: float      # A₁·u*_{I₀}|I₀|
    aggregate_fit: float        # aggregate/aggregate_scale
    nu_carleson: float          # max over checked J of Σ_{I∈G, I⊆J} ν(I)/ν(J)
    nu_half: float              # max over checked J of Σ_{I∈G*(J)} ν(I)/ν(J)

    @property
    def per_J_ok(self) -> bool:
        return self.per_J_ratio <= 1 + REL

    @property
    def aggregate_ok(self) -> bool:
        # Σ⟨u⟩_I|I| over a sparse family is at most 2∫M(1_{I₀}u)
        return self.aggregate_fit <= 2 * C1 * (1 + REL)


def uj_carleson_bounds(forest: StoppingForest, model: DyadicModel, u, v,
                       cell: list[int] | None = None) -> UJReport:
    """Checks on U_J; the ν-Carleson ratios are taken over J ∈ G that lie in ``cell``."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    ua, va = averages(model, u), averages(model, v)
    fam = forest.family
    A1 = float(np.max(ua[fam] * va[fam])) if fam else 0.0
    m = model.leaf_mass
    per, agg = 0.0, 0.0
    for J, Uj in forest.U.items():
        nrm = float(np.dot(Uj ** 2 * v, m))
        agg += nrm
        den = C1 * A1 * ua[J] * model.mass[J]
        if nrm > 0:
            per = max(per, nrm / den if den > 0 else np.inf)
    scale = A1 * maximal_ustar_all(model, u)[forest.I0] * model.mass[forest.I0]
    fit = agg / scale if scale > 0 else (0.0 if agg == 0 else np.inf)

    nu = va * model.mass
    G = forest.stopping
    check = G if cell is None else [J for J in G if J in set(cell)]
    carl, half = 0.0, 0.0
    for J in check:
        if nu[J] <= 0:
            continue
        carl = max(carl, sum(nu[I] for I in G if model.contains(J, I)) / nu[J])
        half = max(half, sum(nu[I] for I in forest.children[J]) / nu[J])
    return UJReport(A1, per, agg, scale, fit, carl, half)


def dual_embedding_sum(forest: StoppingForest, model: DyadicModel, v, g) -> float:
    """Σ_{I∈G∖{I₀}} ⟨g⟩²_{I,ν}ν(I) for ν = v dx."""
    v = np.asarray(v, float)
    nu = averages(model, v) * model.mass
    gv = averages(model, np.asarray(g, float) * v) * model.mass
    tot = 0.0
    for I in forest.stopping:
        if I != forest.I0 and nu[I] > 0:
            tot += gv[I] ** 2 / nu[I]
    return float(tot)


def ab_decomposition(forest: StoppingForest, model: DyadicModel, v, g) -> tuple[float, float, float]:
    """(Σ_J A(J), Σ_J B(J), ∫(Σ_J U_J) g v): the first two add up to the third."""
    v = np.asarray(v, float)
    g = np.asarray(g, float)
    m = model.leaf_mass
    sa = sb = 0.0
    for J, Uj in forest.U.items():
        inG = np.zeros(model.n_leaves, bool)
        for I in forest.children[J]:
            inG[model.leaf_slice(I)] = True
        w = Uj * g * v * m
        sa += float(np.sum(w[~inG]))
        sb += float(np.sum(w[inG]))
    total = float(np.dot(sum(forest.U.values()) * g * v, m))
    return sa, sb, total


# -- (k, n) splitting and the one-sided theorem -------------------------------------------

@dataclass(frozen=True)
class KNSplit:
    A: float
    cells: dict            # (k, n) ↦ sorted atom list
    null: list[int]        # members with ⟨u⟩⟨v⟩ = 0
    rho: np.ndarray = field(repr=False)

    def members(self) -> list[int]:
        return sorted([I for c in self.cells.values() for I in c] + self.null)


def one_sided_bump(model: DyadicModel, u, v, alpha: PenaltyFn, family, variant: str = "maximal",
                   exponent: float = 2.0) -> float:
    """sup over the family of α(u*/u)^exponent·u*·⟨v⟩."""
    fam = list(family)
    if not fam:
        return 0.0
    us = ustar_all(model, u, variant)
    ua, va = averages(model, u), averages(model, v)
    vals = alpha(_ratio(us[fam], ua[fam])) ** exponent * us[fam] * va[fam]
    return float(np.max(vals))


def split_kn(op: OperatorSpec, model: DyadicModel, u, v, alpha: PenaltyFn,
             variant: str = "maximal") -> KNSplit:
    """Cells 2^k ≤ ρ_I < 2^{k+1}, 2^{-n-1}B_k < ⟨u⟩⟨v⟩ ≤ 2^{-n}B_k with B_k = 2^{-k}α(2^k)^{-2}A."""
    if not alpha.is_increasing():
        raise HypothesisViolated("the (k, n) splitting needs an increasing penalty")
    fam = sorted(op.data) if op.kind == "sparse" else sorted(int(I) for I in op.data)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    A = one_sided_bump(model, u, v, alpha, fam, variant)
    us = ustar_all(model, u, variant)
    ua, va = averages(model, u), averages(model, v)
    rho = _ratio(us, ua)
    cells: dict = {}
    null = []
    for I in fam:
        p = ua[I] * va[I]
        if p <= 0:
            null.append(I)
            continue
        k = int(np.floor(np.log2(rho[I]) + 1e-12))
        while 2.0 ** k > rho[I] * (1 + 1e-12):
            k -= 1
        Bk = 2.0 ** -k * float(alpha(2.0 ** k)) ** -2 * A
        if p > Bk * (1 + 1e-9):
            raise HypothesisViolated(f"atom {I}: ⟨u⟩⟨v⟩ exceeds B_k")
        n = max(0, int(np.floor(np.log2(Bk / p))))
        while p > 2.0 ** -n * Bk * (1 + 1e-12) and n > 0:
            n -= 1
        while p <= 2.0 ** (-n - 1) * Bk:
            n += 1
        cells.setdefault((k, n), []).append(I)
    return KNSplit(A, cells, null, rho)


@dataclass(frozen=True)
class OneSidedReport:
    testing: float
    A: float
    c_alpha: float
    ratio: float                      # testing/(C_α²A⟨u⟩_{I₀}|I₀|)
    pieces: dict                      # (k, n) ↦ (norm, target) with target = A^½2^{-n/2}α(2^k)^{-1}(⟨u⟩|I₀|)^½
    piece_ratio: float
    cap: float

    @property
    def holds(self) -> bool:
        return self.ratio <= self.cap and self.piece_ratio <= self.cap


def _sparse_matrix(model, atoms):
    T = np.zeros((model.n_leaves, model.n_leaves))
    m = model.leaf_mass
    for I in atoms:
        sl = model.leaf_slice(I)
        T[sl, sl] += np.outer(np.ones(sl.stop - sl.start), m[sl] / model.mass[I])
    return T


def one_sided_verify(op: OperatorSpec, model: DyadicModel, u, v, alpha: PenaltyFn,
                     I0: int = 0, cap: float = 1e4) -> OneSidedReport:
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    m = model.leaf_mass
    split = split_kn(op, model, u, v, alpha)
    A = split.A
    Ca = c_alpha(alpha, "integral_only").value
    ind = _indicator(model, I0)
    sl = model.leaf_slice(I0)
    T = operator_matrix(op, model)
    Tu = T @ (ind * u)
    testing = float(np.dot((Tu ** 2 * v * m)[sl], np.ones(sl.stop - sl.start)))
    uI = float(np.dot(u, ind * m))
    denom = Ca ** 2 * A * uI
    ratio = testing / denom if denom > 0 else (0.0 if testing == 0 else np.inf)
    pieces, pr = {}, 0.0
    for (k, n), atoms in split.cells.items():
        Tk = _sparse_matrix(model, atoms) @ (ind * u)
        nrm = float(np.sqrt(np.dot(Tk ** 2 * v * m, ind)))
        target = np.sqrt(A * uI) * 2.0 ** (-n / 2) / float(alpha(2.0 ** k))
        pieces[(k, n)] = (nrm, target)
        if target > 0:
            pr = max(pr, nrm / target)
    return OneSidedReport(testing, A, Ca, ratio, pieces, pr, cap)


# -- one weight --------------------------------------------------------------------------

def one_weight_penalty(level: float) -> PenaltyFn:
    """tα(t) = level for t ≤ level and α = ∞ beyond; its C_α equals 1."""
    L = np.log(level)

    def ax(x):
        x = np.asarray(x, float)
        with np.errstate(over="ignore"):
            return np.where(x <= L * (1 + 1e-12), level * np.exp(-x), np.inf)
    return PenaltyFn(alpha_exp=ax, name=f"alpha:one_weight[{level:g}]", validate=False)


@dataclass(frozen=True)
class OneWeightReport:
    A2: float
    Ainfty_v: float
    Ainfty_u: float
    level: float          # max([v]_{A₂}, largest Lorentz ratio of u and v)
    norm: float
    bound: float          # theorem bound with the one-weight penalty
    fit: float            # norm/[v]^{3/2}_{A₂} for shifts, norm²/([u]_{A∞}[u,v]_{A₂}) for sparse
    kind: str

    @property
    def holds(self) -> bool:
        return self.norm <= self.bound * (1 + REL)


def one_weight_bounds(op: OperatorSpec, model: DyadicModel, v) -> OneWeightReport:
    """One-weight setting u = v⁻¹ with the penalty tα(t) constant up to the bump level."""
    v = np.asarray(v, float)
    if np.any(v <= 0):
        raise DivisionByZero("v must be positive on every leaf")
    u = 1.0 / v
    rep_v = a2_and_wilson(model, v)
    rep_u = a2_and_wilson(model, u, v)
    A2 = rep_v.A2
    lor = max(float(np.max(_ratio(ustar_all(model, w, "lorentz"), averages(model, w)))) for w in (u, v))
    level = max(A2, lor, 1.0)
    norm = power_norm(weighted_matrix(operator_matrix(op, model), model, u, v)).norm
    # with tα = level: α(u*/u)u* = level·⟨u⟩, so the two-sided bump is level²·[u,v]_{A₂}; C_α = 1
    A = level ** 2 * A2
    if op.kind == "paraproduct":
        bound = 24 * np.sqrt(A)
    elif op.kind == "positive_dyadic":
        lvl_max = max(float(np.max(_ratio(maximal_ustar_all(model, w), averages(model, w)))) for w in (u, v))
        bound = 4 * op.certificate * max(lvl_max, A2, 1.0) * np.sqrt(A2)
    elif op.kind == "sparse":
        # a sparse family is Carleson with constant at most 2
        lvl_max = max(float(np.max(_ratio(maximal_ustar_all(model, w), averages(model, w)))) for w in (u, v))
        bound = 4 * 2 * max(lvl_max, A2, 1.0) * np.sqrt(A2)
    else:
        bound = 36 * np.sqrt(A)
    Ainf_u = rep_u.Ainfty
    if op.kind == "sparse":
        fit = norm ** 2 / (Ainf_u * A2)
    else:
        fit = norm / A2 ** 1.5
    return OneWeightReport(A2, rep_v.Ainfty, Ainf_u, level, norm, bound, fit, op.kind)
