"""Per-theorem random instances, their evaluation, and shrinking of failing instances.

An evaluation returns a ratio that is ≤ 1 exactly when the checked inequality
holds; bounds that carry an explicit constant expose it so that a different
constant can be injected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import generators as gen
from .bellman import (BellmanB, StepFn, build_m, check_conv02, embedding_sum_carleson,
                      embedding_sum_haar, main_dyadic_gap)
from .bumps import bump_supremum, parse_alpha, parse_young, alpha_from_young
from .dyadic import DyadicModel, from_nested
from .functionals import DistributionFn, combine, concavity_gap
from .operators import OperatorSpec, dense_norm, operator_matrix, weighted_matrix, power_norm
from .stopping import SAWYER_K, one_sided_verify, one_weight_bounds, sawyer_constant

THEOREMS = ("embed-carleson", "embed-haar", "lerner-2sided", "shift-2sided", "para-2sided",
            "one-sided", "sawyer-K", "bellman-m", "conv-gap", "orlicz-entropy", "one-weight")

# explicit constants of the checked bounds
CONSTANTS = {"embed-carleson": 4.0, "embed-haar": 36.0, "lerner-2sided": 4.0,
             "shift-2sided": 36.0, "para-2sided": 24.0, "sawyer-K": SAWYER_K}

DEFAULT_VARIANT = {"embed-carleson": "maximal", "lerner-2sided": "maximal", "one-sided": "maximal"}


@dataclass
class Config:
    seed: int = 20240611
    trials: int = 10_000
    depth_max: int = 8
    depth_min: int = 1
    max_leaves: int = 64
    alpha: str = "alpha:t"
    young: str = "young:loglog"
    variant: str | None = None
    tolerance: float = 1e-9
    jobs: int = 1
    constant: float | None = None     # replaces the theorem's explicit constant
    one_sided_cap: float = 1e4

    def to_json(self) -> dict:
        return dict(sorted(self.__dict__.items()))

    @staticmethod
    def from_json(obj: dict) -> "Config":
        if not isinstance(obj, dict):
            raise ValueError("config must be a JSON object")
        known = set(Config.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        cfg = Config(**obj)
        cfg.validate()
        return cfg

    def validate(self):
        ints = ("seed", "trials", "depth_max", "depth_min", "max_leaves", "jobs")
        for k in ints:
            if not isinstance(getattr(self, k), int) or isinstance(getattr(self, k), bool):
                raise ValueError(f"{k} must be an integer")
        if self.trials < 0 or self.jobs < 1 or not 0 <= self.depth_min <= self.depth_max:
            raise ValueError("need trials ≥ 0, jobs ≥ 1 and 0 ≤ depth_min ≤ depth_max")
        if not (isinstance(self.tolerance, (int, float)) and self.tolerance >= 0):
            raise ValueError("tolerance must be a nonnegative number")
        if self.variant not in (None, "lorentz", "maximal"):
            raise ValueError("variant must be lorentz or maximal")
        if self.constant is not None and not self.constant > 0:
            raise ValueError("constant must be positive")
        parse_alpha(self.alpha)
        parse_young(self.young)
        return self


def trial_rng(seed: int, i: int) -> np.random.Generator:
    """Stream for trial i, independent of the order in which trials run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


# -- instances ---------------------------------------------------------------------------

@dataclass
class Instance:
    model: DyadicModel | None = None
    leaf: dict = field(default_factory=dict)     # name ↦ leaf array
    atom: dict = field(default_factory=dict)     # name ↦ atom array
    op: OperatorSpec | None = None
    extra: dict = field(default_factory=dict)    # JSON-ready data for tree-free instances

    def to_json(self) -> dict:
        out = {"extra": self.extra}
        if self.model is not None:
            out["model"] = self.model.to_json()
            out["leaf"] = {k: np.asarray(v).tolist() for k, v in self.leaf.items()}
            out["atom"] = {k: np.asarray(v).tolist() for k, v in self.atom.items()}
        if self.op is not None:
            out["op"] = self.op.to_json()
        return out

    @staticmethod
    def from_json(obj: dict) -> "Instance":
        if "model" not in obj:
            return Instance(extra=obj.get("extra", {}))
        model = DyadicModel.from_json(obj["model"])
        op = OperatorSpec.from_json(obj["op"], model) if "op" in obj else None
        return Instance(model, {k: np.array(v, float) for k, v in obj.get("leaf", {}).items()},
                        {k: np.array(v, float) for k, v in obj.get("atom", {}).items()},
                        op, obj.get("extra", {}))


def _model(rng, cfg: Config) -> DyadicModel:
    d = int(rng.integers(cfg.depth_min, cfg.depth_max + 1))
    return gen.random_model(rng, max_depth=d, max_leaves=cfg.max_leaves)


def _u(rng, model):
    return gen.random_weight(rng, model, zeros=0.3 if rng.random() < 0.3 else 0.0)


def generate(theorem: str, rng: np.random.Generator, cfg: Config) -> Instance:
    if theorem in ("embed-carleson", "embed-haar"):
        m = _model(rng, cfg)
        inst = Instance(m, {"u": _u(rng, m), "f": gen.random_signed(rng, m)})
        if theorem == "embed-carleson":
            inst.atom["a"] = gen.random_carleson(rng, m)
        return inst
    if theorem in ("lerner-2sided", "shift-2sided", "para-2sided", "sawyer-K", "one-sided"):
        m = _model(rng, cfg)
        kind = {"lerner-2sided": "positive_dyadic", "shift-2sided": "haar_shift",
                "para-2sided": "paraproduct"}.get(theorem, "sparse")
        return Instance(m, {"u": _u(rng, m), "v": _u(rng, m)}, op=gen.random_operator(rng, m, kind))
    if theorem == "one-weight":
        m = _model(rng, cfg)
        return Instance(m, {"v": gen.random_weight(rng, m)}, op=gen.random_haar_shift(rng, m))
    if theorem == "bellman-m":
        n = int(rng.integers(1, 12))
        r = np.cumsum(np.exp(rng.normal(0, 1.5, n)))
        h = np.sort(np.exp(rng.normal(0, 2, n)))[::-1]
        return Instance(extra={"r": r.tolist(), "h": h.tolist()})
    if theorem == "conv-gap":
        N1, N2 = gen.random_midpoint_pair(rng)
        f1, f2 = rng.normal(size=2) * np.exp(rng.normal(0, 1, 2))
        return Instance(extra={"N1": N1.to_pairs(), "N2": N2.to_pairs(), "f1": float(f1), "f2": float(f2)})
    if theorem == "orlicz-entropy":
        k = int(rng.integers(1, 7))
        m = rng.dirichlet(np.full(k, 0.5))
        m = np.maximum(m, 1e-12)
        m /= m.sum()
        vals = np.exp(rng.uniform(-6, 6, k))
        return Instance(extra={"vals": vals.tolist(), "m": m.tolist()})
    raise ValueError(f"unknown theorem {theorem!r}")


# -- evaluation --------------------------------------------------------------------------

@dataclass(frozen=True)
class Outcome:
    ratio: float              # ≤ 1 iff the inequality holds
    fit: float = float("nan")  # a fitted constant, where the check records one
    depth: int = -1


@lru_cache(maxsize=None)
def _alpha(name: str):
    return parse_alpha(name)


@lru_cache(maxsize=None)
def _bellman(name: str) -> BellmanB:
    return BellmanB(_alpha(name))


@lru_cache(maxsize=None)
def _young_alpha(name: str):
    return alpha_from_young(parse_young(name))


def _c(cfg: Config, theorem: str) -> float:
    return CONSTANTS[theorem] if cfg.constant is None else cfg.constant


def _div(a: float, b: float) -> float:
    if b > 0:
        return a / b
    return 0.0 if a <= 0 else np.inf


def _norm(K: np.ndarray, precise: bool) -> float:
    return dense_norm(K) if precise else power_norm(K).norm


def evaluate(theorem: str, inst: Instance, cfg: Config, precise: bool = False) -> Outcome:
    """Ratio of the two sides; ``precise`` replaces power iteration with a dense SVD."""
    depth = inst.model.max_depth if inst.model is not None else -1
    alpha = _alpha(cfg.alpha)
    variant = cfg.variant or DEFAULT_VARIANT.get(theorem, "lorentz")
    if theorem in ("embed-carleson", "embed-haar"):
        u, f = inst.leaf["u"], inst.leaf["f"]
        if theorem == "embed-carleson":
            rep = embedding_sum_carleson(inst.model, u, f, inst.atom["a"], alpha)
        else:
            rep = embedding_sum_haar(inst.model, u, f, alpha)
        scale = CONSTANTS[theorem] / _c(cfg, theorem)
        return Outcome(rep.ratio * scale, depth=depth)
    if theorem in ("lerner-2sided", "shift-2sided", "para-2sided"):
        m, u, v = inst.model, inst.leaf["u"], inst.leaf["v"]
        A = bump_supremum(m, u, v, alpha, "two_sided", variant).A
        C = alpha.c_alpha().value
        extra = inst.op.certificate if theorem == "lerner-2sided" else 1.0
        bound = _c(cfg, theorem) * C * extra * np.sqrt(A)
        n = _norm(weighted_matrix(operator_matrix(inst.op, m), m, u, v), precise)
        return Outcome(_div(n, bound), fit=_div(n, C * extra * np.sqrt(A)), depth=depth)
    if theorem == "sawyer-K":
        m, u, v = inst.model, inst.leaf["u"], inst.leaf["v"]
        S = sawyer_constant(inst.op, m, u, v).S
        n = _norm(weighted_matrix(operator_matrix(inst.op, m), m, u, v), precise)
        return Outcome(_div(n * n, _c(cfg, theorem) * S), fit=_div(n * n, S), depth=depth)
    if theorem == "one-sided":
        rep = one_sided_verify(inst.op, inst.model, inst.leaf["u"], inst.leaf["v"], alpha,
                               cap=cfg.one_sided_cap)
        return Outcome(max(rep.ratio, rep.piece_ratio) / rep.cap, fit=rep.ratio, depth=depth)
    if theorem == "one-weight":
        m, v = inst.model, inst.leaf["v"]
        rep = one_weight_bounds(inst.op, m, v)
        r = max(_div(rep.Ainfty_v, rep.A2), _div(rep.norm, rep.bound))
        return Outcome(r, fit=rep.fit, depth=depth)
    if theorem == "bellman-m":
        phi = StepFn(np.array(inst.extra["r"]), np.array(inst.extra["h"]))
        mfun = build_m(phi)
        y = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, 1000)])
        rep = check_conv02(mfun, y, phi)
        m0 = float(mfun(0.0))
        err0 = abs(m0 - 4 * phi.norm1) / (4 * phi.norm1)
        # largest violation among the four checks; negative means slack
        bad = max(err0 - 1e-12, -rep.min_rel_slack - 1e-12,
                  -rep.majorant_gap - 1e-12, -1.0 if rep.neg_dm_convex else 1.0)
        return Outcome(1.0 + bad, fit=rep.min_rel_slack)
    if theorem == "conv-gap":
        N1 = DistributionFn.from_pairs(inst.extra["N1"])
        N2 = DistributionFn.from_pairs(inst.extra["N2"])
        N = combine([0.5, 0.5], [N1, N2])
        cg = concavity_gap(N, N1, N2)
        scale = max(1.0, abs(cg.gap))
        bad1 = max(cg.lower_bound - cg.gap - 1e-12 * scale, cg.weaker_bound - cg.lower_bound - 1e-12 * scale) / scale
        gr = main_dyadic_gap(_bellman(cfg.alpha), inst.extra["f1"], inst.extra["f2"], N1, N2)
        bad2 = (gr.rhs - gr.lhs - 1e-10 * gr.scale) / gr.scale
        return Outcome(1.0 + max(bad1, bad2), fit=_div(gr.rhs, gr.lhs))
    if theorem == "orlicz-entropy":
        ay = _young_alpha(cfg.young)
        vals, mm = np.array(inst.extra["vals"]), np.array(inst.extra["m"])
        p = ay.predicate_slack(vals, mm)
        j = ay.jensen_slack(vals, mm)
        l1 = float(np.dot(vals, mm))
        return Outcome(1.0 + max(-p, -j) / l1, fit=min(p, j) / l1)
    raise ValueError(f"unknown theorem {theorem!r}")


def violates(out: Outcome, cfg: Config) -> bool:
    return not out.ratio <= 1.0 + cfg.tolerance


def run_trial(theorem: str, i: int, cfg: Config) -> tuple[Outcome, Instance]:
    inst = generate(theorem, trial_rng(cfg.seed, i), cfg)
    return evaluate(theorem, inst, cfg), inst


# -- shrinking ---------------------------------------------------------------------------

def _cut(inst: Instance, cut) -> Instance:
    """Turn every atom with ``cut[a]`` into a leaf; its subtree merges into it.

    Leaf arrays are mass-averaged, atom arrays and operator data restricted;
    Haar and paraproduct blocks of atoms that became leaves are dropped.
    """
    m = inst.model
    alive = np.ones(m.n_atoms, bool)
    for a in range(m.n_atoms):
        p = m.parent[a]
        if p >= 0 and (not alive[p] or cut[p]):
            alive[a] = False
    keep = np.flatnonzero(alive)
    new_id = {int(a): k for k, a in enumerate(keep)}
    is_leaf = lambda a: bool(cut[a] or m.is_leaf[a])

    def plan(a):
        if is_leaf(a):
            return float(m.mass[a])
        return [plan(c) for c in m.children[a]]

    nm = from_nested(plan(0))
    leaf = {}
    for name, w in inst.leaf.items():
        vals = []
        for a in keep:
            if is_leaf(a):
                sl = m.leaf_slice(a)
                vals.append(float(np.dot(w[sl], m.leaf_mass[sl]) / m.mass[a]))
        leaf[name] = np.array(vals)
    atom = {name: np.asarray(x)[keep] for name, x in inst.atom.items()}
    op = None
    if inst.op is not None:
        k, d = inst.op.kind, inst.op.data
        if k == "sparse":
            op = OperatorSpec.from_json({"kind": k, "data": [new_id[a] for a in d if a in new_id]}, nm)
        else:
            inner = {a: x for a, x in d.items()
                     if a in new_id and (k == "positive_dyadic" or not is_leaf(a))}
            data = {str(new_id[a]): (np.asarray(x).tolist() if k != "positive_dyadic" else x)
                    for a, x in inner.items()}
            op = OperatorSpec.from_json({"kind": k, "data": data}, nm)
    return Instance(nm, leaf, atom, op, dict(inst.extra))


def truncate(inst: Instance, depth: int) -> Instance:
    """Cut the tree at ``depth``."""
    return _cut(inst, inst.model.depth >= depth)


def collapse(inst: Instance, a: int) -> Instance:
    cut = np.zeros(inst.model.n_atoms, bool)
    cut[a] = True
    return _cut(inst, cut)


def restrict(inst: Instance, a: int) -> Instance:
    """The subtree of atom a as a model of its own (preorder ids shift by −a)."""
    m = inst.model
    sub = range(a, a + int(m.size[a]))
    parent = [-1] + [int(m.parent[b]) - a for b in sub[1:]]
    nm = DyadicModel(parent, m.mass[a:a + int(m.size[a])])
    sl = m.leaf_slice(a)
    leaf = {k: np.asarray(w)[sl] for k, w in inst.leaf.items()}
    atom = {k: np.asarray(x)[a:a + int(m.size[a])] for k, x in inst.atom.items()}
    op = None
    if inst.op is not None:
        k, d = inst.op.kind, inst.op.data
        if k == "sparse":
            data = [b - a for b in d if b in sub]
        else:
            data = {str(b - a): (np.asarray(x).tolist() if k != "positive_dyadic" else x)
                    for b, x in d.items() if b in sub}
        op = OperatorSpec.from_json({"kind": k, "data": data}, nm)
    return Instance(nm, leaf, atom, op, dict(inst.extra))


def _drop_op_atom(inst: Instance, a) -> Instance:
    d = inst.op.data
    data = [x for x in d if x != a] if inst.op.kind == "sparse" else {k: v for k, v in d.items() if k != a}
    obj = inst.op.to_json()
    obj["data"] = data if inst.op.kind == "sparse" else {
        str(k): (np.asarray(v).tolist() if inst.op.kind != "positive_dyadic" else v) for k, v in data.items()}
    return replace(inst, op=OperatorSpec.from_json(obj, inst.model))


def _rank(x: float) -> int:
    """Simplicity of a leaf value: 0, then 1, then one decimal, then anything."""
    if x == 0:
        return 0
    if x == 1:
        return 1
    return 2 if x == np.round(x, 1) else 3


@dataclass
class Shrunk:
    instance: Instance
    outcome: Outcome
    steps: list
    tolerance_artifact: bool
    precise_ratio: float


def minimize(theorem: str, inst: Instance, cfg: Config, max_rounds: int = 4) -> Shrunk | None:
    """Delta debugging over tree depth, operator atoms and leaf values.

    Returns None when the instance does not fail. A failure whose excess over
    1 vanishes under dense re-evaluation, or stays below 10⁻⁶, is flagged as a
    tolerance artifact rather than shrunk.
    """
    out = evaluate(theorem, inst, cfg)
    if not violates(out, cfg):
        return None
    precise = evaluate(theorem, inst, cfg, precise=True)
    if precise.ratio <= 1.0 + cfg.tolerance or precise.ratio - 1.0 < 1e-6:
        return Shrunk(inst, out, [], True, precise.ratio)

    def fails(c: Instance) -> Outcome | None:
        try:
            o = evaluate(theorem, c, cfg)
        except (ValueError, ArithmeticError):
            return None
        except Exception as e:  # a package error means the candidate left the valid domain
            if type(e).__module__.startswith("entbump"):
                return None
            raise
        return o if violates(o, cfg) and o.ratio - 1.0 >= 1e-6 else None

    steps = []
    if inst.model is not None:
        # smallest failing subtree first
        for a in sorted(range(1, inst.model.n_atoms), key=lambda b: (inst.model.size[b], b)):
            if inst.model.is_leaf[a]:
                continue
            c = restrict(inst, a)
            o = fails(c)
            if o is not None:
                inst, out = c, o
                steps.append(f"subtree of atom {a}")
                break
        for d in range(0, inst.model.max_depth):
            c = truncate(inst, d)
            o = fails(c)
            if o is not None:
                inst, out = c, o
                steps.append(f"depth→{d}")
                break
        for _ in range(max_rounds):
            changed = False
            a = 1
            while a < inst.model.n_atoms:
                if not inst.model.is_leaf[a]:
                    c = collapse(inst, a)
                    o = fails(c)
                    if o is not None:
                        inst, out, changed = c, o, True
                        steps.append(f"collapse atom {a}")
                        continue
                a += 1
            if inst.op is not None:
                for a in list(inst.op.data):
                    c = _drop_op_atom(inst, a)
                    o = fails(c)
                    if o is not None:
                        inst, out, changed = c, o, True
                        steps.append(f"drop atom {a}")
            for name, w in inst.leaf.items():
                for k in range(len(w)):
                    for val in (0.0, 1.0, float(np.round(w[k], 1))):
                        if _rank(val) >= _rank(w[k]):
                            continue
                        w2 = w.copy()
                        w2[k] = val
                        c = replace(inst, leaf={**inst.leaf, name: w2})
                        o = fails(c)
                        if o is not None:
                            inst, out, changed = c, o, True
                            w = w2
                            steps.append(f"{name}[{k}]→{val:g}")
                            break
            if not changed:
                break
    else:
        for key, val in inst.extra.items():
            if isinstance(val, list) and len(val) > 1:
                for k in range(len(val)):
                    c = replace(inst, extra={**inst.extra, key: val[:k] + val[k + 1:]})
                    try:
                        o = fails(c)
                    except Exception:
                        o = None
                    if o is not None:
                        inst, out = c, o
                        steps.append(f"drop {key}[{k}]")
                        break
    return Shrunk(inst, out, steps, False, evaluate(theorem, inst, cfg, precise=True).ratio)


def preset_hash(cfg: Config) -> str:
    import hashlib
    blob = json.dumps({"alpha": cfg.alpha, "young": cfg.young, "constants": CONSTANTS}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()
