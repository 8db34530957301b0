"""Finite non-homogeneous dyadic models.

Atoms are identified by their depth-first preorder index, so the root is 0
and the descendants of atom ``a`` are exactly ``a+1 .. a+size[a]-1``.
Weights are numpy arrays indexed by leaf position (depth-first leaf order).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AdditivityViolation, ZeroMassAtom

REL_TOL = 1e-12


class DyadicModel:
    """Immutable atom tree with masses; see module docstring for indexing."""

    def __init__(self, parent: Sequence[int], mass: Sequence[float], *, check: bool = True):
        parent = np.asarray(parent, dtype=np.int64)
        mass = np.asarray(mass, dtype=float)
        n = len(parent)
        if n == 0 or parent[0] != -1:
            raise ValueError("atom 0 must be the root")
        children: list[list[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            p = int(parent[i])
            if not 0 <= p < i:
                raise ValueError("atoms must be listed in depth-first preorder")
            children[p].append(i)
        self.parent = parent
        self.mass = mass
        self.children = tuple(tuple(c) for c in children)
        self.n_atoms = n

        depth = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            depth[i] = depth[parent[i]] + 1
        self.depth = depth

        size = np.ones(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            size[parent[i]] += size[i]
        self.size = size
        # preorder check: children of i occupy consecutive blocks right after i
        for i in range(n):
            nxt = i + 1
            for c in self.children[i]:
                if c != nxt:
                    raise ValueError("atoms must be listed in depth-first preorder")
                nxt = c + size[c]

        is_leaf = np.array([len(c) == 0 for c in self.children])
        self.is_leaf = is_leaf
        self.leaves = np.flatnonzero(is_leaf)
        self.n_leaves = len(self.leaves)
        leaf_pos = np.cumsum(is_leaf) - is_leaf  # leaves strictly before each atom
        self.leaf_lo = leaf_pos.astype(np.int64)
        self.leaf_hi = np.array([leaf_pos[i + size[i] - 1] + is_leaf[i + size[i] - 1]
                                 for i in range(n)], dtype=np.int64)
        self.leaf_mass = mass[self.leaves]
        self.max_depth = int(depth.max())
        self._levels = [np.flatnonzero(depth == d) for d in range(self.max_depth, 0, -1)]
        if check:
            self._validate()

    def _validate(self):
        if np.any(~np.isfinite(self.mass)) or np.any(self.mass <= 0):
            bad = int(np.flatnonzero(~(self.mass > 0))[0]) if np.any(~(self.mass > 0)) else -1
            raise ZeroMassAtom(f"atom {bad} has non-positive mass")
        for i, ch in enumerate(self.children):
            if ch:
                s = float(self.mass[list(ch)].sum())
                if abs(s - self.mass[i]) > 1e-9 * max(abs(s), self.mass[i]):
                    raise AdditivityViolation(
                        f"atom {i}: mass {self.mass[i]!r} != children sum {s!r}")

    # -- structure helpers -------------------------------------------------
    def contains(self, a: int, b: int) -> bool:
        """True if atom b lies in the subtree of a (b may equal a)."""
        return a <= b < a + self.size[a]

    def subtree(self, a: int) -> range:
        return range(a, a + int(self.size[a]))

    def leaf_slice(self, a: int) -> slice:
        return slice(int(self.leaf_lo[a]), int(self.leaf_hi[a]))

    def ancestors(self, a: int) -> list[int]:
        out = []
        while a != -1:
            out.append(a)
            a = int(self.parent[a])
        return out

    def leaf_atom_matrix(self) -> np.ndarray:
        """0/1 matrix E with E[I, leaf] = 1 iff leaf lies in I."""
        E = np.zeros((self.n_atoms, self.n_leaves))
        for i in range(self.n_atoms):
            E[i, self.leaf_lo[i]:self.leaf_hi[i]] = 1.0
        return E

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        return {"atoms": [{"id": i, "parent": (None if i == 0 else int(self.parent[i])),
                           "children": list(self.children[i]), "mass": float(self.mass[i])}
                          for i in range(self.n_atoms)]}

    @classmethod
    def from_json(cls, data: Mapping) -> "DyadicModel":
        atoms = data["atoms"]
        children = {a["id"]: list(a.get("children", [])) for a in atoms}
        masses = {a["id"]: a["mass"] for a in atoms}
        roots = [a["id"] for a in atoms if a.get("parent") is None]
        if len(roots) != 1:
            raise ValueError("exactly one root required")
        return build_model(children, masses, root=roots[0])

    def __repr__(self):
        return f"DyadicModel(atoms={self.n_atoms}, leaves={self.n_leaves}, depth={self.max_depth})"


def build_model(children: Mapping[int, Sequence[int]] | Sequence[Sequence[int]],
                masses: Mapping[int, float] | Sequence[float], root=0) -> DyadicModel:
    """Build a model from child lists and per-atom masses (any labels).

    Atoms are relabeled into depth-first preorder. Raises ZeroMassAtom or
    AdditivityViolation when the masses are inconsistent.
    """
    if not isinstance(children, Mapping):
        children = dict(enumerate(children))
    if not isinstance(masses, Mapping):
        masses = dict(enumerate(masses))
    parent, mass = [], []
    stack = [(root, -1)]
    while stack:
        a, p = stack.pop()
        idx = len(parent)
        parent.append(p)
        mass.append(float(masses[a]))
        for c in reversed(list(children.get(a, []))):
            stack.append((c, idx))
    return DyadicModel(parent, mass)


def from_nested(plan) -> DyadicModel:
    """Model from nested lists: a number is a leaf mass, a list an internal atom."""
    parent, mass = [], []

    def rec(node, p):
        idx = len(parent)
        parent.append(p)
        mass.append(0.0)
        if isinstance(node, (list, tuple)):
            if len(node) == 0:
                raise ValueError("empty internal atom")
            mass[idx] = sum(rec(c, idx) for c in node)
        else:
            mass[idx] = float(node)
        return mass[idx]

    rec(plan, -1)
    return DyadicModel(parent, mass)


def uniform(branching: int, depth: int, total: float = 1.0) -> DyadicModel:
    """Homogeneous tree: every atom splits into ``branching`` equal children."""
    def plan(d, m):
        if d == 0:
            return m
        return [plan(d - 1, m / branching) for _ in range(branching)]
    return from_nested(plan(depth, total))


def refine_leaf(model: DyadicModel, leaf_atom: int) -> tuple[DyadicModel, np.ndarray]:
    """Split one leaf into two equal halves.

    Returns the new model and ``atom_map`` sending old atom ids to new ids.
    Weights extend by repeating the old leaf's value on both halves.
    """
    if not model.is_leaf[leaf_atom]:
        raise ValueError("not a leaf")
    parent, mass, atom_map = [], [], np.zeros(model.n_atoms, dtype=np.int64)
    for i in range(model.n_atoms):
        idx = len(parent)
        atom_map[i] = idx
        parent.append(-1 if i == 0 else int(atom_map[model.parent[i]]))
        mass.append(float(model.mass[i]))
        if i == leaf_atom:
            half = model.mass[i] / 2
            parent += [idx, idx]
            mass += [half, half]
    return DyadicModel(parent, mass), atom_map


def refine_weight(model: DyadicModel, w: np.ndarray, leaf_atom: int) -> np.ndarray:
    pos = int(model.leaf_lo[leaf_atom])
    return np.insert(np.asarray(w, float), pos, w[pos])


# -- weights -----------------------------------------------------------------

def weight_from_map(model: DyadicModel, values: Mapping[int, float]) -> np.ndarray:
    w = np.zeros(model.n_leaves)
    index = {int(a): k for k, a in enumerate(model.leaves)}
    for a, val in values.items():
        w[index[int(a)]] = float(val)
    return w


def weight_to_map(model: DyadicModel, w: np.ndarray) -> dict[int, float]:
    return {int(a): float(x) for a, x in zip(model.leaves, w)}


def averages(model: DyadicModel, w: np.ndarray) -> np.ndarray:
    """⟨w⟩_I for every atom, summed level by level from the leaves up."""
    tot = np.zeros(model.n_atoms)
    tot[model.leaves] = np.asarray(w, float) * model.leaf_mass
    for lev in model._levels:
        np.add.at(tot, model.parent[lev], tot[lev])
    return tot / model.mass


def average(model: DyadicModel, w: np.ndarray, I: int) -> float:
    sl = model.leaf_slice(I)
    return float(np.dot(w[sl], model.leaf_mass[sl]) / model.mass[I])


def integral(model: DyadicModel, w: np.ndarray, I: int = 0) -> float:
    sl = model.leaf_slice(I)
    return float(np.dot(w[sl], model.leaf_mass[sl]))


def martingale_difference(model: DyadicModel, w: np.ndarray, I: int) -> np.ndarray:
    """Δ_I w as a leaf function: ⟨w⟩_child − ⟨w⟩_I on each child, zero off I."""
    out = np.zeros(model.n_leaves)
    ch = model.children[I]
    if len(ch) <= 1:
        return out
    base = average(model, w, I)
    for c in ch:
        out[model.leaf_slice(c)] = average(model, w, c) - base
    return out


def child_differences(model: DyadicModel, avg: np.ndarray, I: int) -> np.ndarray:
    """Vector (⟨w⟩_c − ⟨w⟩_I)_c over the children of I, given all averages."""
    ch = model.children[I]
    if len(ch) <= 1:
        return np.zeros(len(ch))
    return avg[list(ch)] - avg[I]


def maximal_function(model: DyadicModel, w: np.ndarray, I0: int) -> np.ndarray:
    """M(w·1_{I0}) on the leaves of I0 (zero elsewhere).

    Each leaf receives the largest |average| over the atoms between it and I0;
    larger atoms cannot exceed ⟨|w|⟩_{I0} so they are irrelevant on I0.
    """
    aw = averages(model, np.abs(w))
    out = np.zeros(model.n_leaves)
    running = {I0: aw[I0]}
    for a in model.subtree(I0):
        if a != I0:
            running[a] = max(running[int(model.parent[a])], aw[a])
        if model.is_leaf[a]:
            out[model.leaf_lo[a]] = running[a]
    return out


def maximal_ustar_all(model: DyadicModel, w: np.ndarray) -> np.ndarray:
    """⟨M(w·1_I)⟩_I for every atom I (maximal-variant u*)."""
    aw = averages(model, np.abs(w))
    n = model.n_atoms
    out = np.zeros(n)
    chains: list[np.ndarray | None] = [None] * n
    for a in range(n - 1, -1, -1):
        ch = model.children[a]
        if not ch:
            arr = np.array([aw[a]])
        else:
            arr = np.maximum(np.concatenate([chains[c] for c in ch]), aw[a])
            for c in ch:
                chains[c] = None
        chains[a] = arr
        sl = model.leaf_slice(a)
        out[a] = float(np.dot(arr, model.leaf_mass[sl]) / model.mass[a])
    return out


# -- Carleson sequences and sparse families ---------------------------------

@dataclass(frozen=True)
class CarlesonSequence:
    entries: np.ndarray  # per atom
    carleson_norm: float
    attaining_atom: int


def _as_atom_array(model: DyadicModel, a) -> np.ndarray:
    if isinstance(a, Mapping):
        arr = np.zeros(model.n_atoms)
        for k, v in a.items():
            arr[int(k)] = float(v)
        return arr
    arr = np.asarray(a, dtype=float)
    if arr.shape != (model.n_atoms,):
        raise ValueError("coefficient array must have one entry per atom")
    return arr


def carleson_norm(model: DyadicModel, a) -> CarlesonSequence:
    """sup over I0 of |I0|⁻¹ Σ_{I⊆I0} a_I |I|, with the attaining atom."""
    arr = _as_atom_array(model, a)
    if np.any(arr < 0):
        raise ValueError("Carleson coefficients must be nonnegative")
    tail = arr * model.mass
    for i in range(model.n_atoms - 1, 0, -1):
        tail[model.parent[i]] += tail[i]
    ratio = tail / model.mass
    k = int(np.argmax(ratio))
    return CarlesonSequence(arr, float(ratio[k]), k)


@dataclass(frozen=True)
class SparseCertificate:
    ratio: float
    worst_atom: int | None
    is_sparse: bool


def check_sparse(model: DyadicModel, family: Iterable[int]) -> SparseCertificate:
    """Worst ratio |∪ proper members| / |I0| over members I0.

    Containment follows the tree: a descendant atom counts as a proper member
    even when a single-child chain makes it the same set.
    """
    members = sorted(set(int(x) for x in family))
    member_set = set(members)
    covered = {m: 0.0 for m in members}
    for m in members:
        # nearest member strictly above m gets m as a maximal sub-member
        p = int(model.parent[m])
        while p != -1 and p not in member_set:
            p = int(model.parent[p])
        if p != -1:
            covered[p] += model.mass[m]
    worst, worst_atom = 0.0, None
    for m in members:
        r = covered[m] / model.mass[m]
        if r > worst:
            worst, worst_atom = r, m
    return SparseCertificate(worst, worst_atom, worst <= 0.5 * (1 + REL_TOL))


def model_dumps(model: DyadicModel) -> str:
    return json.dumps(model.to_json())
