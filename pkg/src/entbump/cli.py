"""Command line: ``entbump verify``, ``entbump sharpness``, ``entbump minimize``.

Exit codes: 0 when every checked inequality holds, 1 on a violation, 2 on bad input.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import sharpness as sh
from .errors import EntbumpError, HypothesisViolated
from .sweeps import (THEOREMS, Config, Instance, evaluate, generate, minimize, preset_hash,
                     trial_rng, violates)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _dump(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _finite(x: float):
    return x if np.isfinite(x) else str(x)


# -- verify ------------------------------------------------------------------------------

def _chunk(args):
    theorem, cfg, lo, hi = args
    rows = []
    for i in range(lo, hi):
        inst = generate(theorem, trial_rng(cfg.seed, i), cfg)
        out = evaluate(theorem, inst, cfg)
        rows.append((i, out.ratio, out.fit, out.depth, violates(out, cfg)))
    return rows


def run_sweep(theorem: str, cfg: Config) -> dict:
    """Evaluate cfg.trials instances; the fold is order-independent so ``jobs`` cannot change it."""
    step = max(1, min(500, cfg.trials // max(1, 4 * cfg.jobs) or 1))
    tasks = [(theorem, cfg, lo, min(lo + step, cfg.trials)) for lo in range(0, cfg.trials, step)]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            parts = list(ex.map(_chunk, tasks))
    else:
        parts = [_chunk(t) for t in tasks]
    rows = sorted(r for p in parts for r in p)
    ratios = np.array([r[1] for r in rows]) if rows else np.zeros(0)
    fits = np.array([r[2] for r in rows]) if rows else np.zeros(0)
    failing = [r[0] for r in rows if r[4]]
    by_depth: dict = {}
    for _, ratio, fit, depth, _ in rows:
        d = by_depth.setdefault(str(depth), {"count": 0, "max_ratio": -np.inf, "max_fit": -np.inf})
        d["count"] += 1
        d["max_ratio"] = max(d["max_ratio"], ratio)
        if np.isfinite(fit):
            d["max_fit"] = max(d["max_fit"], fit)
    for d in by_depth.values():
        d["max_ratio"] = _finite(d["max_ratio"])
        d["max_fit"] = _finite(d["max_fit"])
    worst = int(rows[int(np.argmax(ratios))][0]) if rows else None
    finite_fits = fits[np.isfinite(fits)]
    return {
        "theorem": theorem,
        "trials": len(rows),
        "max_ratio": _finite(float(ratios.max())) if rows else None,
        "worst_trial": worst,
        "max_fit": _finite(float(finite_fits.max())) if len(finite_fits) else None,
        "violations": len(failing),
        "first_violation": failing[0] if failing else None,
        "by_depth": dict(sorted(by_depth.items(), key=lambda kv: int(kv[0]))),
    }


def _report_header(cfg: Config, command: str) -> dict:
    return {"command": command, "version": __version__, "config": cfg.to_json(),
            "preset_hash": preset_hash(cfg)}


def cmd_verify(theorem: str, cfg: Config, out: str | None) -> int:
    if theorem not in THEOREMS:
        raise InputError(f"unknown theorem {theorem!r}; choose from {', '.join(THEOREMS)}")
    summary = run_sweep(theorem, cfg)
    report = _report_header(cfg, "verify")
    report["summary"] = summary
    code = EXIT_OK
    if summary["violations"]:
        code = EXIT_VIOLATION
        i = summary["first_violation"]
        inst = generate(theorem, trial_rng(cfg.seed, i), cfg)
        report["violation"] = {"trial": i, "instance": inst.to_json(),
                               "ratio": _finite(evaluate(theorem, inst, cfg).ratio)}
        shrunk = minimize(theorem, inst, cfg)
        if shrunk is not None:
            report["violation"]["minimized"] = _shrunk_json(shrunk)
    _dump(report, out)
    return code


def _shrunk_json(s) -> dict:
    m = s.instance.model
    return {"instance": s.instance.to_json(), "ratio": _finite(s.outcome.ratio),
            "precise_ratio": _finite(s.precise_ratio), "steps": s.steps,
            "tolerance_artifact": s.tolerance_artifact,
            "depth": int(m.max_depth) if m is not None else None}


# -- minimize ----------------------------------------------------------------------------

def cmd_minimize(report_path: str, out: str | None, cfg_override: dict) -> int:
    try:
        with open(report_path) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read report: {e}")
    if "violation" not in report:
        _dump({"command": "minimize", "result": "no violation in report; nothing to do"}, out)
        return EXIT_OK
    try:
        cfg = Config.from_json({**report["config"], **cfg_override})
        theorem = report["summary"]["theorem"]
        inst = Instance.from_json(report["violation"]["instance"])
    except (KeyError, TypeError, ValueError, EntbumpError) as e:
        raise InputError(f"malformed report: {e}")
    shrunk = minimize(theorem, inst, cfg)
    res = {"command": "minimize", "theorem": theorem, "config": cfg.to_json()}
    if shrunk is None:
        res["result"] = "failure vanished on re-evaluation"
        _dump(res, out)
        return EXIT_OK
    res["result"] = "tolerance artifact" if shrunk.tolerance_artifact else "minimized"
    res["minimized"] = _shrunk_json(shrunk)
    _dump(res, out)
    return EXIT_OK if shrunk.tolerance_artifact else EXIT_VIOLATION


# -- sharpness ---------------------------------------------------------------------------

CLOSED_FORM = {  # 2∫₀^{ln X} dy/R(y) for the ψ presets at p = 2
    "psi:s": lambda X: 2 * np.log(X),
    "psi:llogl": lambda X: 2 * np.log1p(np.log(X)),
    "psi:llog2": lambda X: 2 * (1 - 1 / (1 + np.log(X))),
}


def cmd_sharpness(construction: str, preset: str, cutoffs, p: float, beta: str,
                  out: str | None, csv_path: str | None) -> int:
    kinds = {"fundamental_psi": "psi:", "general_p": "psi:", "entropy_alpha": "alpha:"}
    if construction not in kinds:
        raise InputError(f"unknown construction {construction!r}")
    if not preset.startswith(kinds[construction]):
        raise InputError(f"{construction} needs a {kinds[construction]}… preset, got {preset!r}")
    if construction == "fundamental_psi" and p != 2:
        raise InputError("fundamental_psi is the p = 2 construction; use general_p")
    report = {"command": "sharpness", "version": __version__, "construction": construction,
              "preset": preset, "p": p, "cutoffs": list(map(float, cutoffs))}
    rows_csv = []
    try:
        if construction == "entropy_alpha":
            rep = sh.entropy_sharpness(preset, beta, cutoffs)
            report.update({
                "beta": beta, "verdict": "divergent", "c_alpha_divergent": rep.c_alpha_divergent,
                "bump_sup": rep.bump.B, "bump_worst_interval": rep.bump.worst,
                "bump_change_on_extension": rep.bump_change,
                "harmonic_min_increment": rep.ladder_min_increment,
                "v_doubling": rep.doubling_ok, "v_even_increasing": rep.monotone_ok})
            rows = rep.partials
            for r in rows:
                rows_csv.append({"X": r.X, "partial_lower": r.lower, "partial_exact": r.exact,
                                 "bump_sup": rep.bump.B})
        else:
            pair = sh.fundamental_pair(preset, p)
            rows = sh.divergence_witness(pair, cutoffs)
            verdict = sh.classify(pair)
            b = sh.bump_uniformity(pair)
            b0, b1, change = sh.stability(pair)
            report.update({
                "verdict": verdict.label, "ladder_min_increment": verdict.min_increment,
                "integral_lower": _finite(verdict.total.lower), "integral_upper": _finite(verdict.total.upper),
                "bump_sup": b.B, "bump_worst_interval": b.worst, "bump_change_on_extension": change})
            ref = CLOSED_FORM.get(preset) if p == 2 else None
            for r in rows:
                row = {"X": r.X, "partial_lower": r.lower, "partial_exact": r.exact, "bump_sup": b.B}
                if ref is not None:
                    row["closed_form"] = float(ref(r.X))
                rows_csv.append(row)
    except (ValueError, HypothesisViolated) as e:
        raise InputError(str(e))
    report["rows"] = rows_csv
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows_csv[0]))
            w.writeheader()
            for row in rows_csv:
                w.writerow({k: repr(float(v)) for k, v in row.items()})
    _dump(report, out)
    return EXIT_OK


# -- argument handling ---------------------------------------------------------------------

def _cutoffs(text: str):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"bad cutoff list {text!r}")
    if not vals or any(not v > 1 for v in vals):
        raise InputError("cutoffs must be numbers > 1")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="entbump", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="property sweep of one inequality")
    v.add_argument("theorem", help=", ".join(THEOREMS))
    v.add_argument("--config", help="JSON file with the same keys as the flags")
    v.add_argument("--seed", type=int)
    v.add_argument("--trials", type=int)
    v.add_argument("--depth-max", type=int, dest="depth_max")
    v.add_argument("--depth-min", type=int, dest="depth_min")
    v.add_argument("--alpha")
    v.add_argument("--young")
    v.add_argument("--variant", choices=["lorentz", "maximal"])
    v.add_argument("--tolerance", type=float)
    v.add_argument("--jobs", type=int)
    v.add_argument("--constant", type=float, help="replace the theorem's explicit constant")
    v.add_argument("--out", help="report.json (stdout if omitted)")

    s = sub.add_parser("sharpness", help="continuum counterexamples")
    s.add_argument("construction", choices=["fundamental_psi", "entropy_alpha", "general_p"])
    s.add_argument("preset", help="psi:s | psi:llogl | psi:llog2, or an alpha:… preset")
    s.add_argument("--cutoffs", default="1e3,1e6,1e12")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--beta", default="alpha:t")
    s.add_argument("--out")
    s.add_argument("--csv")

    m = sub.add_parser("minimize", help="shrink the violation stored in a verify report")
    m.add_argument("report")
    m.add_argument("--tolerance", type=float)
    m.add_argument("--out")
    return ap


FLAG_KEYS = ("seed", "trials", "depth_max", "depth_min", "alpha", "young", "variant", "tolerance",
             "jobs", "constant")


def make_config(args) -> Config:
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read config: {e}")
        if not isinstance(base, dict):
            raise InputError("config must be a JSON object")
    for k in FLAG_KEYS:
        val = getattr(args, k, None)
        if val is not None:
            base[k] = val
    try:
        return Config.from_json(base)
    except (TypeError, ValueError) as e:
        raise InputError(f"invalid config: {e}")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        if args.command == "verify":
            return cmd_verify(args.theorem, make_config(args), args.out)
        if args.command == "sharpness":
            return cmd_sharpness(args.construction, args.preset, _cutoffs(args.cutoffs), args.p,
                                 args.beta, args.out, args.csv)
        override = {} if args.tolerance is None else {"tolerance": args.tolerance}
        return cmd_minimize(args.report, args.out, override)
    except InputError as e:
        print(f"entbump: {e}", file=sys.stderr)
        return EXIT_INPUT
