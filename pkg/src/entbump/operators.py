"""Sparse operators, complexity-1 Haar shifts, paraproducts and positive dyadic operators.

Every operator is materialized as a dense leaf-basis matrix ``T`` with
(Tg)[i] = Σ_j T[i, j] g[j]; averaging weights (leaf masses) are folded in.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dyadic import DyadicModel, _as_atom_array, carleson_norm, check_sparse
from .errors import NormalizationViolated, PowerIterationStall

CERT_TOL = 1e-12


def _avg_row(model: DyadicModel, I: int) -> np.ndarray:
    """Row vector r with r·g = ⟨g⟩_I."""
    r = np.zeros(model.n_leaves)
    sl = model.leaf_slice(I)
    r[sl] = model.leaf_mass[sl] / model.mass[I]
    return r


def _indicator(model: DyadicModel, I: int) -> np.ndarray:
    c = np.zeros(model.n_leaves)
    c[model.leaf_slice(I)] = 1.0
    return c


def _child_lift(model: DyadicModel, I: int, vals) -> np.ndarray:
    """Leaf function equal to vals[k] on the k-th child of I."""
    out = np.zeros(model.n_leaves)
    for k, c in enumerate(model.children[I]):
        out[model.leaf_slice(c)] = vals[k]
    return out


def difference_projector(masses: np.ndarray) -> np.ndarray:
    """μ-orthogonal projection of child-value vectors onto mean-zero vectors."""
    masses = np.asarray(masses, float)
    k = len(masses)
    return np.eye(k) - np.outer(np.ones(k), masses) / masses.sum()


def block_certificate(T_I, model: DyadicModel, I: int) -> float:
    """sup (T_I f, g) over f, g in the difference space of I with ‖f‖₁ = ‖g‖₁ = 1.

    Extreme points of the unit ball are (1_{c}/|c| − 1_{c'}/|c'|)/2 over ordered
    pairs of children, so the bilinear sup is a maximum over pairs of pairs.
    The admissible level is |I|⁻¹.
    """
    ch = model.children[I]
    k = len(ch)
    T_I = np.asarray(T_I, float)
    if k <= 1 or not np.any(T_I):
        return 0.0
    m = model.mass[list(ch)]
    P = difference_projector(m)
    T = P @ T_I @ P
    ext = []
    for a, b in itertools.permutations(range(k), 2):
        e = np.zeros(k)
        e[a] += 0.5 / m[a]
        e[b] -= 0.5 / m[b]
        ext.append(e)
    X = np.array(ext)
    # (T f, g) = Σ_c m_c (T f)_c g_c, over all pairs of extreme points
    vals = (X @ T.T) @ (X * m).T
    return float(np.max(vals))


@dataclass
class OperatorSpec:
    """Tagged operator description; ``data`` depends on ``kind``.

    * sparse: list of atom ids
    * positive_dyadic: atom id → a_I ≥ 0
    * haar_shift: atom id → k×k child-basis matrix
    * paraproduct: atom id → child-value vector (mean zero)
    """
    kind: str
    data: object
    certificate: float = 0.0
    l2_blocks: bool = False  # experimental mode: blocks normalized in unweighted L²

    def to_json(self) -> dict:
        if self.kind == "sparse":
            d = sorted(int(x) for x in self.data)
        elif self.kind == "positive_dyadic":
            d = {str(k): float(v) for k, v in self.data.items()}
        else:
            d = {str(k): np.asarray(v).tolist() for k, v in self.data.items()}
        return {"kind": self.kind, "data": d, "certificate": self.certificate}

    @staticmethod
    def from_json(obj: Mapping, model: DyadicModel) -> "OperatorSpec":
        kind, d = obj["kind"], obj["data"]
        if kind == "sparse":
            return sparse_operator(model, d)
        if kind == "positive_dyadic":
            return positive_dyadic(model, {int(k): v for k, v in d.items()})
        if kind == "haar_shift":
            return haar_shift(model, {int(k): np.array(v) for k, v in d.items()})
        if kind == "paraproduct":
            return paraproduct(model, {int(k): np.array(v) for k, v in d.items()})
        raise ValueError(f"unknown operator kind {kind!r}")


def sparse_operator(model: DyadicModel, family) -> OperatorSpec:
    fam = sorted(set(int(x) for x in family))
    cert = check_sparse(model, fam)
    if not cert.is_sparse:
        raise NormalizationViolated(f"family not sparse (ratio {cert.ratio:.4g} at atom {cert.worst_atom})")
    return OperatorSpec("sparse", fam, cert.ratio)


def positive_dyadic(model: DyadicModel, coeffs) -> OperatorSpec:
    arr = _as_atom_array(model, coeffs)
    if np.any(arr < 0):
        raise NormalizationViolated("positive dyadic coefficients must be ≥ 0")
    d = {int(i): float(arr[i]) for i in np.flatnonzero(arr)}
    return OperatorSpec("positive_dyadic", d, carleson_norm(model, arr).carleson_norm)


def haar_shift(model: DyadicModel, blocks: Mapping[int, np.ndarray], *, l2_blocks: bool = False) -> OperatorSpec:
    """Haar shift from child-basis blocks; blocks are projected onto the difference space."""
    proj, worst = {}, 0.0
    for I, B in blocks.items():
        I = int(I)
        ch = model.children[I]
        B = np.asarray(B, float)
        if B.shape != (len(ch), len(ch)):
            raise ValueError(f"block for atom {I} must be {len(ch)}×{len(ch)}")
        if len(ch) <= 1:
            continue
        P = difference_projector(model.mass[list(ch)])
        B = P @ B @ P
        proj[I] = B
        if l2_blocks:
            m = np.sqrt(model.mass[list(ch)])
            c = float(np.linalg.norm((m[:, None] * B) / m[None, :], 2))
            lvl = c
            ok = c <= 1 + CERT_TOL
        else:
            c = block_certificate(B, model, I)
            lvl = c * model.mass[I]
            ok = lvl <= 1 + CERT_TOL
        if not ok:
            raise NormalizationViolated(f"block at atom {I} has normalized size {lvl:.6g} > 1")
        worst = max(worst, lvl)
    return OperatorSpec("haar_shift", proj, worst, l2_blocks)


@dataclass(frozen=True)
class ParaproductCertificate:
    normalized: float   # sup_I |I|⁻¹ Σ_{I'⊆I} ‖b_{I'}‖²_∞ |I'|
    classical: float    # sup_I |I|⁻¹ Σ_{I'⊆I} ‖b_{I'}‖²_{L²}


def paraproduct_certificate(symbol: Mapping[int, np.ndarray], model: DyadicModel) -> ParaproductCertificate:
    sup_sq = np.zeros(model.n_atoms)
    l2_sq = np.zeros(model.n_atoms)
    for I, b in symbol.items():
        I = int(I)
        b = np.asarray(b, float)
        if len(b) == 0:
            continue
        m = model.mass[list(model.children[I])]
        sup_sq[I] = float(np.max(np.abs(b))) ** 2
        l2_sq[I] = float(np.dot(m, b ** 2)) / model.mass[I]  # ‖b‖²_{L²}/|I| per unit mass
    return ParaproductCertificate(carleson_norm(model, sup_sq).carleson_norm,
                                  carleson_norm(model, l2_sq).carleson_norm)


def paraproduct(model: DyadicModel, symbol: Mapping[int, np.ndarray]) -> OperatorSpec:
    sym = {}
    for I, b in symbol.items():
        I = int(I)
        ch = model.children[I]
        b = np.asarray(b, float)
        if len(b) != len(ch):
            raise ValueError(f"symbol at atom {I} needs one value per child")
        m = model.mass[list(ch)]
        if abs(np.dot(m, b)) > 1e-12 * max(1.0, np.dot(m, np.abs(b))):
            raise NormalizationViolated(f"symbol at atom {I} is not mean zero")
        sym[I] = b
    cert = paraproduct_certificate(sym, model)
    if cert.normalized > 1 + CERT_TOL:
        raise NormalizationViolated(f"paraproduct Carleson constant {cert.normalized:.6g} > 1")
    return OperatorSpec("paraproduct", sym, cert.normalized)


# -- matrices and application ----------------------------------------------------------

def operator_matrix(op: OperatorSpec, model: DyadicModel) -> np.ndarray:
    n = model.n_leaves
    T = np.zeros((n, n))
    if op.kind == "sparse":
        for I in op.data:
            T += np.outer(_indicator(model, I), _avg_row(model, I))
    elif op.kind == "positive_dyadic":
        for I, a in op.data.items():
            T += a * np.outer(_indicator(model, I), _avg_row(model, I))
    elif op.kind == "haar_shift":
        for I, B in op.data.items():
            ch = model.children[I]
            # Δ_I g as child values: R g where R[k] = avg_child_k − avg_I
            R = np.array([_avg_row(model, c) - _avg_row(model, I) for c in ch])
            L = np.array([_indicator(model, c) for c in ch]).T  # leaf × child
            T += L @ B @ R
    elif op.kind == "paraproduct":
        for I, b in op.data.items():
            T += np.outer(_child_lift(model, I, b), _avg_row(model, I))
    else:
        raise ValueError(f"unknown kind {op.kind!r}")
    return T


def apply(op: OperatorSpec, model: DyadicModel, g) -> np.ndarray:
    return operator_matrix(op, model) @ np.asarray(g, float)


def adjoint_matrix(T: np.ndarray, model: DyadicModel) -> np.ndarray:
    """Matrix of the L²(μ)-adjoint: M⁻¹ Tᵀ M with M = diag(leaf masses)."""
    m = model.leaf_mass
    return (T.T * m[None, :]) / m[:, None]


def weighted_matrix(T: np.ndarray, model: DyadicModel, u, v) -> np.ndarray:
    """K with ‖K‖₂ equal to the norm of f ↦ T(fu) from L²(u) to L²(v)."""
    m = model.leaf_mass
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    return np.sqrt(v * m)[:, None] * T * np.sqrt(u / m)[None, :]


@dataclass(frozen=True)
class NormResult:
    norm: float
    iterations: int
    residual: float
    vector: np.ndarray = field(repr=False, default=None)  # right singular vector in φ-coordinates


def power_norm(K: np.ndarray, tol: float = 1e-9, max_iter: int = 100_000, seed: int = 12345) -> NormResult:
    """Largest singular value of K by power iteration on KᵀK.

    Stops when the eigen-residual ‖Gx − λx‖ falls below tol·λ, which pins λ to
    an eigenvalue of G within relative tol.
    """
    G = K.T @ K
    n = G.shape[0]
    if n == 0 or not np.any(G):
        return NormResult(0.0, 0, 0.0, np.zeros(n))
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    lam, res = 0.0, np.inf
    for it in range(1, max_iter + 1):
        y = G @ x
        lam = float(x @ y)
        res = float(np.linalg.norm(y - lam * x))
        ny = np.linalg.norm(y)
        if ny == 0:
            return NormResult(0.0, it, 0.0, x)
        if res <= tol * max(lam, 1e-300) * 0.5:
            return NormResult(float(np.sqrt(max(lam, 0.0))), it, res, x)
        x = y / ny
    raise PowerIterationStall(f"no convergence after {max_iter} iterations",
                              bracket=(float(np.sqrt(max(lam, 0))), float(np.sqrt(lam + res))))


def dense_norm(K: np.ndarray) -> float:
    if K.size == 0:
        return 0.0
    return float(np.linalg.norm(K, 2))


def weighted_norm(op: OperatorSpec, model: DyadicModel, u, v, *, tol: float = 1e-9,
                  max_iter: int = 100_000, T: np.ndarray | None = None) -> NormResult:
    """‖f ↦ T(fu)‖ from L²(u) to L²(v); the best constant √C in ∫|T(fu)|²v ≤ C∫|f|²u."""
    T = operator_matrix(op, model) if T is None else T
    return power_norm(weighted_matrix(T, model, u, v), tol, max_iter)
