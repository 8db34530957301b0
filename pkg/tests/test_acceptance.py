"""Acceptance criteria 1-12, each reported as one PASS/FAIL line at the end of the run."""
import math
import time

import numpy as np
import pytest

from entbump import sweeps as S
from entbump.bellman import (BellmanB, BellmanM, StepFn, build_m, embedding_sum_carleson,
                             main_dyadic_gap, splitting_gap)
from entbump.bumps import (ALPHA_PRESETS, alpha_from_psi, alpha_from_young, c_alpha, min_young,
                           min_young_sandwich, parse_alpha, parse_young, riemann_sum_check,
                           young_llogl_floor, young_power)
from entbump.cli import run_sweep
from entbump.dyadic import from_nested, uniform
from entbump.functionals import (DistributionFn, combine, concavity_gap, distribution_fn,
                                 second_derivative_check)
from entbump.generators import random_distribution, random_midpoint_pair
from entbump.operators import sparse_operator
from entbump.sharpness import (classify, divergence_witness, entropy_sharpness, fundamental_pair,
                               stability)
from entbump.stopping import (C1, SAWYER_K, build_stopping_forest, one_sided_verify, one_weight_bounds,
                              split_kn, uj_carleson_bounds)

RESULTS = []
TRIALS = 10_000


def record(n, title, ok, detail):
    RESULTS.append((n, f"{'PASS' if ok else 'FAIL'} criterion {n:>2} {title}: {detail}"))
    assert ok, detail


def clean(summary):
    # a violation is ratio > 1 + 1e-9; equality cases land within round-off of 1
    return summary["violations"] == 0


# -- 1 -----------------------------------------------------------------------------------

def test_c01_carleson_embedding():
    lines, ok = [], True
    for a in ("alpha:t", "alpha:log2"):
        s = run_sweep("embed-carleson", S.Config(trials=TRIALS, alpha=a))
        ok &= clean(s)
        lines.append(f"{a} max ratio {s['max_ratio']:.4f} ({s['violations']} violations)")
    r = embedding_sum_carleson(from_nested(1.0), np.ones(1), np.ones(1), {0: 1.0}, parse_alpha("alpha:t"))
    single = r.lhs == pytest.approx(1.0, rel=1e-12) and r.rhs == pytest.approx(8.0, rel=1e-9)
    lines.append(f"single atom {r.lhs:.6g} vs {r.rhs:.6g}")
    record(1, "Carleson embedding", ok and single, "; ".join(lines))


# -- 2 -----------------------------------------------------------------------------------

def test_c02_haar_embedding():
    s = run_sweep("embed-haar", S.Config(trials=TRIALS))
    record(2, "Haar embedding", clean(s),
           f"max ratio {s['max_ratio']:.4f} over {s['trials']} ({s['violations']} violations)")


# -- 3 -----------------------------------------------------------------------------------

def test_c03_two_sided_bounds():
    lines, ok = [], True
    for th in ("lerner-2sided", "shift-2sided", "para-2sided"):
        cfg = S.Config(trials=TRIALS)
        s = run_sweep(th, cfg)
        ok &= clean(s)
        # power iteration against the SVD on the first 200 instances (all have ≤ 64 leaves)
        worst = 0.0
        for i in range(200):
            inst = S.generate(th, S.trial_rng(cfg.seed, i), cfg)
            assert inst.model.n_leaves <= 64
            fast = S.evaluate(th, inst, cfg).ratio
            exact = S.evaluate(th, inst, cfg, precise=True).ratio
            if exact > 0:
                worst = max(worst, abs(fast - exact) / exact)
        ok &= worst <= 1e-9
        lines.append(f"{th} max ratio {s['max_ratio']:.4f}, power vs SVD {worst:.1e}")
    record(3, "two-sided operator bounds", ok, "; ".join(lines))


# -- 4 -----------------------------------------------------------------------------------

def test_c04_concavity():
    rng = np.random.default_rng(401)
    worst = math.inf
    for _ in range(TRIALS):
        N1, N2 = random_midpoint_pair(rng)
        cg = concavity_gap(combine([0.5, 0.5], [N1, N2]), N1, N2)
        scale = max(1.0, abs(cg.gap))
        worst = min(worst, (cg.gap - cg.lower_bound) / scale, (cg.lower_bound - cg.weaker_bound) / scale)
    # ΔN proportional to N: −u*'' equals u_Δ²/u
    eq_err = 0.0
    for N, c in [([[1.0, 0.75]], 1 / 3), ([[0.5, 0.8], [2.0, 0.4], [3.0, 0.1]], 0.5)]:
        N0 = DistributionFn.from_pairs(N)
        N1 = DistributionFn.from_pairs([[x, c * y] for x, y in N])
        for row in second_derivative_check(N0, N1, [0.0, 0.3, 0.6]):
            eq_err = max(eq_err, abs(row.d2 - row.bound) / row.bound)
    record(4, "concavity laws", worst >= -1e-12 and eq_err <= 1e-12,
           f"min slack {worst:.3e} over {TRIALS} pairs; equality case rel err {eq_err:.1e}")


# -- 5 -----------------------------------------------------------------------------------

def test_c05_bellman_construction():
    m = build_m(StepFn(np.array([1.0]), np.array([1.0])))
    y = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 1000)])
    exact_err = float(np.max(np.abs(m(y) - 4 / (1 + y)) * (1 + y) / 4))
    s = run_sweep("bellman-m", S.Config(trials=TRIALS))
    eq = 0.0
    for r, w in [(1.0, 1.0), (0.3, 2.0), (7.0, 0.1), (1e-3, 5.0)]:
        b = BellmanM(np.array([r]), np.array([w]))
        eq = max(eq, float(np.max(np.abs(2 * b.d1(y) ** 2 - b(y) * b.d2(y)) / (b(y) * b.d2(y)))))
    ok = exact_err <= 1e-15 and clean(s) and eq <= 1e-12
    record(5, "Bellman construction", ok,
           f"4/(1+y) rel err {exact_err:.1e}; {s['trials']} step functions, max ratio {s['max_ratio']:.6f}; "
           f"2m'^2 = m m'' rel err {eq:.1e}")


# -- 6 -----------------------------------------------------------------------------------

def test_c06_main_and_splitting():
    s = run_sweep("conv-gap", S.Config(trials=TRIALS))
    B = BellmanB(parse_alpha("alpha:t"))
    rng = np.random.default_rng(601)
    split_ok, n_split = True, 3000
    for _ in range(n_split):
        n = int(rng.integers(2, 7))
        g = rng.dirichlet(np.ones(n))
        g[-1] = 1 - g[:-1].sum()
        Ns = [random_distribution(rng) for _ in range(n)]
        split_ok &= splitting_gap(B, g, rng.normal(size=n), Ns).holds
    consistent = True
    for _ in range(300):
        Np, Nm = random_midpoint_pair(rng)
        fp, fm = rng.normal(size=2)
        sp = splitting_gap(B, [0.5, 0.5], [fp, fm], [Np, Nm])
        mg = main_dyadic_gap(B, fp, fm, Np, Nm)
        consistent &= (abs(sp.lhs - mg.lhs) <= 1e-12 * max(1.0, abs(mg.lhs))
                       and abs(sp.rhs - 0.5 * mg.rhs) <= 1e-12 * max(1e-300, mg.rhs))
    record(6, "main dyadic and splitting inequalities", clean(s) and split_ok and consistent,
           f"main: {s['trials']} instances, max ratio {s['max_ratio']:.6f}; splitting: {n_split} instances "
           f"{'all hold' if split_ok else 'VIOLATED'}; two-point consistency {'exact' if consistent else 'broken'}")


# -- 7 -----------------------------------------------------------------------------------

def test_c07_sawyer_transfer():
    s = run_sweep("sawyer-K", S.Config(trials=1000))
    m = uniform(2, 1)
    inst = S.Instance(m, {"u": np.ones(2), "v": np.ones(2)}, op=sparse_operator(m, [0]))
    triv = S.evaluate("sawyer-K", inst, S.Config(), precise=True)
    ok = clean(s) and abs(triv.fit - 1.0) <= 1e-12 and triv.ratio <= 1
    record(7, "Sawyer transfer", ok,
           f"K = {SAWYER_K:.4f}; max norm^2/(K S) {s['max_ratio']:.4f} over {s['trials']}; "
           f"trivial instance norm^2/S = {triv.fit:.12f}")


# -- 8 -----------------------------------------------------------------------------------

def _one_sided_scan(alpha_name, trials=150):
    al = parse_alpha(alpha_name)
    max_fit, env, counts = {}, {}, {}
    X, Y = [], []
    for d in range(4, 11):
        cfg = S.Config(depth_min=d, depth_max=d, max_leaves=64 if d < 8 else 128)
        fits = []
        for i in range(trials):
            inst = S.generate("one-sided", S.trial_rng(7, i), cfg)
            r = one_sided_verify(inst.op, inst.model, inst.leaf["u"], inst.leaf["v"], al)
            fits.append(r.ratio)
            base = math.sqrt(r.A * float(np.dot(inst.leaf["u"], inst.model.leaf_mass)))
            for (k, n), (nrm, tg) in r.pieces.items():
                if nrm > 0 and tg > 0:
                    X.append(math.log(tg))
                    Y.append(math.log(nrm))
                    e = math.log(nrm * float(al(2.0 ** k)) / base)
                    env[n] = max(env.get(n, -math.inf), e)
                    counts[n] = counts.get(n, 0) + 1
        max_fit[d] = max(fits)
    ns = sorted(n for n in env if counts[n] >= 20)
    env_slope = float(np.polyfit(ns, [env[n] for n in ns], 1)[0])
    pooled = float(np.polyfit(X, Y, 1)[0])
    return max_fit, env_slope, pooled


def test_c08_one_sided_scaling():
    target = -math.log(2) / 2
    lines, ok = [], True
    for a in ("alpha:t", "alpha:log2"):
        max_fit, env_slope, pooled = _one_sided_scan(a)
        growth = max(max_fit[d] for d in max_fit) / max_fit[4]
        slope_ok = abs(env_slope - target) <= 0.1 * abs(target)
        ok &= growth <= 2.0 and slope_ok
        lines.append(f"{a} C_fit {max(max_fit.values()):.3f}, depth growth x{growth:.2f}, "
                     f"envelope slope in n {env_slope:.4f} vs {target:.4f} "
                     f"({100 * abs(env_slope / target - 1):.1f}% off), pooled log-log slope {pooled:.3f}")
    record(8, "one-sided testing scaling", ok, "; ".join(lines))


# -- 9 -----------------------------------------------------------------------------------

def test_c09_stopping_machinery():
    al = parse_alpha("alpha:t")
    cfg = S.Config()
    partition, carl, half, perJ, n_cells = True, 0.0, 0.0, 0.0, 0
    for i in range(1000):
        inst = S.generate("one-sided", S.trial_rng(901, i), cfg)
        m, u, v = inst.model, inst.leaf["u"], inst.leaf["v"]
        if np.dot(u, m.leaf_mass) <= 0:
            continue
        fam = list(inst.op.data) + [0]
        f = build_stopping_forest(m, u, 0, fam)
        partition &= f.partition_ok(m)
        perJ = max(perJ, uj_carleson_bounds(f, m, u, v).per_J_ratio)
        for cell in split_kn(inst.op, m, u, v, al).cells.values():
            fc = build_stopping_forest(m, u, 0, list(cell) + [0])
            partition &= fc.partition_ok(m)
            r = uj_carleson_bounds(fc, m, u, v, cell=cell)
            carl, half = max(carl, r.nu_carleson), max(half, r.nu_half)
            perJ = max(perJ, r.per_J_ratio)
            n_cells += 1
    riemann = {k: riemann_sum_check(parse_alpha(f"alpha:{k}"), n_terms=1 << 16).holds for k in ALPHA_PRESETS}
    ok = partition and carl <= 2 * (1 + 1e-12) and half <= 0.5 * (1 + 1e-12) and perJ <= 1 + 1e-10 \
        and all(riemann.values())
    record(9, "stopping machinery", ok,
           f"partitions {'exact' if partition else 'BROKEN'}; nu-Carleson max {carl:.4f} (C = 2) over {n_cells} cells; "
           f"max ||U_J||^2/(C1 A1 <u>_J |J|) = {perJ:.4f} with C1 = {C1:.4f}; "
           f"Riemann lemma holds for {sum(riemann.values())}/{len(riemann)} presets")


# -- 10 ----------------------------------------------------------------------------------

def test_c10_orlicz_pipeline():
    floors = {p: young_llogl_floor(parse_young(p)) for p in ("young:t2", "young:t3", "young:tln2", "young:loglog")}
    Pm = min_young(young_power(2), young_power(3))
    sw = min_young_sandwich(Pm, young_power(2), young_power(3))
    res = alpha_from_psi(lambda sig: (1.0 + np.asarray(sig)) ** 2)
    rng = np.random.default_rng(1001)
    m = uniform(2, 3)
    jensen = math.inf
    for _ in range(TRIALS):
        w = np.exp(rng.normal(0, 2, 8)) * (rng.random(8) < 0.7)
        jensen = min(jensen, res.jensen_slack(distribution_fn(m, w, 0)) / max(1.0, float(np.max(w))))
    ay = alpha_from_young(parse_young("young:loglog"))
    C = c_alpha(ay.alpha)
    s = run_sweep("orlicz-entropy", S.Config(trials=1000, young="young:loglog"))
    ok = (all(c > 0 for c in floors.values()) and sw.dominated and jensen >= -1e-10
          and not C.divergent and math.isfinite(C.value) and clean(s))
    record(10, "Orlicz pipeline", ok,
           f"min floor {min(floors.values()):.4f}; sandwich c = {sw.c:.4f}; Jensen min slack {jensen:.2e} "
           f"on {TRIALS}; loglog C_alpha = {C.value:.4f}, predicate max ratio {s['max_ratio']:.6f} on {s['trials']}")


# -- 11 ----------------------------------------------------------------------------------

def test_c11_sharpness():
    t0 = time.perf_counter()
    lines, ok = [], True
    s = fundamental_pair("psi:s")
    b0, b1, rel = stability(s)
    rows = divergence_witness(s, [1e3, 1e6, 1e12])
    closed = max(abs(r.lower - 2 * math.log(r.X)) / (2 * math.log(r.X)) for r in rows)
    exceeds = all(r.exact > r.lower for r in rows)
    ok &= rel < 0.01 and closed <= 1e-8 and exceeds and classify(s).divergent
    lines.append(f"psi=s bump {b0:.4f} (change {100 * rel:.2f}%), closed form err {closed:.1e}")
    ll = fundamental_pair("psi:llogl")
    p = [r.exact for r in divergence_witness(ll, [1e3, 1e6, 1e9, 1e12])]
    inc = all(a < b for a, b in zip(p, p[1:]))
    ok &= inc and classify(ll).divergent
    lines.append(f"LlogL partials {p[0]:.3f} -> {p[-1]:.3f} increasing" if inc else "LlogL partials not increasing")
    v2 = classify(fundamental_pair("psi:llog2"))
    br = v2.total.upper - v2.total.lower
    ok &= (not v2.divergent) and br < 1e-3
    lines.append(f"Llog2 converges, bracket {br:.1e}")
    e = entropy_sharpness("alpha:one")
    ok &= e.c_alpha_divergent and e.ladder_min_increment > 1e-3
    lines.append(f"alpha=1 divergent (ladder increment {e.ladder_min_increment:.3f})")
    dt = time.perf_counter() - t0
    ok &= dt <= 30
    lines.append(f"{dt:.1f} s")
    record(11, "sharpness", ok, "; ".join(lines))


# -- 12 ----------------------------------------------------------------------------------

def test_c12_one_weight():
    cfg = S.Config(trials=TRIALS)
    worst, bad, bound_ok = 0.0, 0, True
    fit_by_depth = {}
    for i in range(TRIALS):
        inst = S.generate("one-weight", S.trial_rng(cfg.seed, i), cfg)
        r = one_weight_bounds(inst.op, inst.model, inst.leaf["v"])
        q = r.Ainfty_v / r.A2
        worst = max(worst, q)
        bad += q > 1 + 1e-12
        bound_ok &= r.holds
        d = inst.model.max_depth
        fit_by_depth[d] = max(fit_by_depth.get(d, 0.0), r.fit)
    first = min(fit_by_depth)
    growth = max(fit_by_depth.values()) / fit_by_depth[first]
    fits = ", ".join(f"d{d} {fit_by_depth[d]:.3f}" for d in sorted(fit_by_depth))
    ok = bad == 0 and bound_ok and growth <= 2.0
    record(12, "one-weight", ok,
           f"[v]_Ainf/[v]_A2 max {worst:.4f} ({bad}/{TRIALS} above 1); shift bound "
           f"{'holds' if bound_ok else 'VIOLATED'}; C_fit by depth {fits} (growth x{growth:.2f})")
