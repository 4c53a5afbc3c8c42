"""Command-line harness: ``gen``, ``solve``, ``verify`` and ``bench``.

Results go to stdout (JSON for ``solve``, a text report for ``verify``) and
logs to stderr, with verbosity from ``NB_LOG=error|info|debug``.  Exit codes:
0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import norms
from .exact import TooLargeError, solve_glb_exact, solve_normlin_exact
from .glb import GlbCaps, NoFeasibleGuess, rounds_T, solve_glb
from .instance import (
    Assignment,
    Instance,
    InstanceError,
    gen_from_set_cover,
    gen_random,
    load_instance,
    objective,
    save_instance,
    NORM_PROFILES,
    random_norm,
)
from .maxtopk import NotMaxTopK, solve_maxtopk
from .normlin import NormLinInstance, solve_ptas
from .oracle import make_strategy

log = logging.getLogger("normglb")

CSV_HEADER = ["instance_id", "m", "n", "algo", "objective", "exact_opt", "ratio", "bound", "wall_ms"]
ALGOS = ("exact", "glb-direct", "glb-roc", "maxtopk", "normlin-ptas", "normlin-exact", "greedy")


class DomainError(Exception):
    """Reported on stderr with exit code 1."""


def _setup_logging():
    level = os.environ.get("NB_LOG", "error").lower()
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
                            level, logging.ERROR))


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True)


# -- gen ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.kind == "random":
        inst = gen_random(args.m, args.n, args.seed, forbidden_prob=args.forbidden_prob,
                          norm_profile=args.norms, integral=args.integral)
        save_instance(inst, args.out)
    elif args.kind == "setcover":
        try:
            sets = json.loads(Path(args.sets).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read sets file: {exc}") from None
        if not isinstance(sets, list) or not all(isinstance(s, list) for s in sets):
            raise DomainError("sets file must hold a JSON list of lists")
        n = args.n if args.n is not None else max((max(s) for s in sets if s), default=0)
        inst = gen_from_set_cover([[int(e) - 1 for e in s] for s in sets], n)
        save_instance(inst, args.out)
    else:
        rng = np.random.default_rng(args.seed)
        n = args.n
        z = np.round(rng.uniform(0, 5, n), 3)
        d = {"p": np.round(rng.uniform(0.1, 10, n), 3).tolist(), "z": z.tolist(),
             "Z": round(float(rng.uniform(0, z.sum())), 3), "psi": random_norm(rng, n).to_dict()}
        Path(args.out).write_text(_dump(d) + "\n", encoding="utf-8")
    return 0


# -- solve -------------------------------------------------------------------------

def greedy(inst: Instance) -> Assignment:
    """Jobs in input order, each to the machine giving the smallest partial objective."""
    sigma = []
    u = np.zeros((inst.m, inst.n))
    for j in range(inst.n):
        best, best_i = math.inf, -1
        for i in np.flatnonzero(inst.allowed[:, j]):
            u[i, j] = inst.p[i, j]
            ld = np.array([inst.inner_norms[k].evaluate(u[k]) for k in range(inst.m)])
            val = float(inst.outer_norm.evaluate(ld))
            u[i, j] = 0.0
            if val < best:
                best, best_i = val, int(i)
        u[best_i, j] = inst.p[best_i, j]
        sigma.append(best_i)
    return Assignment(tuple(sigma))


def _load_normlin(path, eps_flag) -> NormLinInstance:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        eps = eps_flag if eps_flag is not None else float(d.get("epsilon", 0.5))
        return NormLinInstance(np.array(d["p"], dtype=float), np.array(d["z"], dtype=float),
                               float(d["Z"]), norms.norm_from_dict(d["psi"]), eps)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DomainError(f"cannot read NormLin instance: {exc}") from None


def _with_ratio(rec: dict, value: float, opt: float):
    rec["exact_opt"] = opt
    rec["ratio_vs_exact"] = 1.0 if opt == value else (value / opt if opt > 0 else math.inf)


def cmd_solve(args) -> int:
    rec: dict = {"algo": args.algo}
    if args.algo.startswith("normlin"):
        nl = _load_normlin(args.input, args.epsilon)
        if args.algo == "normlin-exact":
            sol = solve_normlin_exact(nl.p, nl.z, nl.Z, nl.psi)
            rec.update({"J": None if sol is None else [j + 1 for j in sol.J],
                        "cost": None if sol is None else sol.cost})
        else:
            res = solve_ptas(nl, args.max_guesses)
            rec.update(res.to_dict())
            rec["epsilon"] = nl.epsilon
            if args.compare_exact and res.J is not None:
                ex = solve_normlin_exact(nl.p, nl.z, nl.Z, nl.psi)
                _with_ratio(rec, res.cost, ex.cost)
        print(_dump(rec))
        return 0

    inst = load_instance(args.input)
    if args.algo == "exact":
        a, val = solve_glb_exact(inst, args.max_assignments)
        rec.update({"assignment": [i + 1 for i in a.sigma], "objective": val})
    elif args.algo in ("glb-direct", "glb-roc"):
        caps = GlbCaps(roc_max_iters=args.max_iters, max_guesses=args.max_guesses)
        strategy = make_strategy(args.oracle)
        res = solve_glb(inst, "direct" if args.algo == "glb-direct" else "roc", args.seed, caps,
                        strategy, workers=args.threads)
        rec.update(res.to_dict())
        rec["bound"] = 144 * rounds_T(inst.n)
    elif args.algo == "maxtopk":
        eps = args.epsilon if args.epsilon is not None else 0.2
        res = solve_maxtopk(inst, eps, args.max_lps)
        rec.update(res.to_dict())
    else:
        a = greedy(inst)
        rec.update({"assignment": [i + 1 for i in a.sigma], "objective": objective(inst, a)})
    if args.compare_exact and args.algo != "exact":
        _, opt = solve_glb_exact(inst, args.max_assignments)
        _with_ratio(rec, rec["objective"], opt)
    print(_dump(rec))
    return 0


# -- verify ------------------------------------------------------------------------

def _suite_topk_identity(rng) -> bool:
    d = int(rng.integers(1, 51))
    u = rng.uniform(0, 10, d)
    k = int(rng.integers(1, d + 1))
    srt = norms.sorted_desc(u)
    tk = norms.top_k(u, k)
    closed = k * srt[k - 1] + np.maximum(u - srt[k - 1], 0.0).sum()
    if abs(tk - closed) > 1e-12 * max(1.0, tk):
        return False
    # grid of 1000 thresholds: the entries of u plus evenly spaced fill
    grid = np.concatenate([u, np.linspace(0, 10, 1000 - d)])
    vals = np.array([norms.top_k_threshold(u, k, t) for t in grid])
    return bool(vals.min() >= tk - 1e-9 and abs(vals.min() - tk) <= 1e-6)


def _suite_majorization(rng) -> bool:
    d = int(rng.integers(1, 21))
    u, v = rng.uniform(0, 10, d), rng.uniform(0, 10, d)
    spec = random_norm(rng, d)
    alpha = norms.majorization_ratio(u, v)
    return bool(norms.eval_norm(spec, u) <= alpha * norms.eval_norm(spec, v) * (1 + 1e-9) + 1e-12)


def _suite_norm_axioms(rng) -> bool:
    d = int(rng.integers(1, 21))
    spec = random_norm(rng, d)
    u, v = rng.uniform(0, 10, d), rng.uniform(0, 10, d)
    f = lambda w: norms.eval_norm(spec, w)
    c = float(rng.uniform(0, 5))
    perm = rng.permutation(d)
    tol = 1e-9 * (1 + f(u) + f(v))
    return bool(abs(f(u[perm]) - f(u)) <= tol
                and f(np.minimum(u, v)) <= f(u) + tol
                and f(u + v) <= f(u) + f(v) + tol
                and abs(f(c * u) - c * f(u)) <= tol * (1 + c))


def _suite_restrict(rng) -> bool:
    d = int(rng.integers(1, 21))
    u = rng.uniform(0, 10, d)
    S = np.flatnonzero(rng.random(d) < 0.5)
    spec = random_norm(rng, d)
    return bool(norms.eval_norm(spec, norms.restrict(u, S)) <= norms.eval_norm(spec, u) * (1 + 1e-12))


SUITES = {
    "topk_identity": _suite_topk_identity,
    "majorization": _suite_majorization,
    "norm_axioms": _suite_norm_axioms,
    "restrict_monotone": _suite_restrict,
}


def run_verify(trials: int, seed: int) -> dict[str, tuple[int, int]]:
    out = {}
    for t, (name, fn) in enumerate(SUITES.items()):
        rng = np.random.default_rng([seed, t])
        ok = 0
        for _ in range(trials):
            try:
                ok += bool(fn(rng))
            except Exception as exc:   # a crashing check counts as a failure
                log.debug("suite %s raised %r", name, exc)
        out[name] = (ok, trials)
    return out


def cmd_verify(args) -> int:
    res = run_verify(args.trials, args.seed)
    failed = 0
    for name, (ok, total) in res.items():
        print(f"{name}: {ok}/{total} passed")
        failed += total - ok
    print("ALL PASS" if failed == 0 else f"FAILURES: {failed}")
    return 0 if failed == 0 else 1


# -- bench -------------------------------------------------------------------------

def _parse_sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        a, _, b = tok.partition("x")
        out.append((int(a), int(b or a)))
    return out


def _parse_seeds(text: str) -> list[int]:
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        if "-" in tok:
            a, b = tok.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    return out


def _timed(fn):
    t = time.perf_counter()
    val = fn()
    return val, (time.perf_counter() - t) * 1000.0


def _ratio(val, opt):
    if val == opt:
        return 1.0
    return val / opt if opt > 0 else math.inf


def _bench_rows(suite: str, m: int, n: int, seed: int, eps: float):
    rows = []
    if suite == "ratios":
        inst = gen_random(m, n, seed, forbidden_prob=0.2, norm_profile="mixed")
        _, opt = solve_glb_exact(inst)
        iid = f"ratios-{m}x{n}-s{seed}"
        res, ms = _timed(lambda: solve_glb(inst, "direct", seed))
        rows.append([iid, m, n, "glb-direct", res.objective, opt, _ratio(res.objective, opt), 144 * rounds_T(n), ms])
        a, ms = _timed(lambda: greedy(inst))
        val = objective(inst, a)
        rows.append([iid, m, n, "greedy", val, opt, _ratio(val, opt), math.inf, ms])
        tinst = gen_random(m, n, seed, forbidden_prob=0.2, norm_profile="topk-linf")
        _, topt = solve_glb_exact(tinst)
        res, ms = _timed(lambda: solve_maxtopk(tinst, eps))
        rows.append([f"{iid}-topk", m, n, "maxtopk", res.objective, topt, _ratio(res.objective, topt),
                     3 + 7 * eps, ms])
    elif suite == "setcover":
        rng = np.random.default_rng([seed, m, n])
        sets = [list(np.flatnonzero(rng.random(n) < 0.4)) for _ in range(m)]
        for j in range(n):
            if not any(j in s for s in sets):
                sets[int(rng.integers(m))].append(j)
        inst = gen_from_set_cover(sets, n)
        _, opt = solve_glb_exact(inst)
        res, ms = _timed(lambda: solve_glb(inst, "direct", seed))
        rows.append([f"setcover-{m}x{n}-s{seed}", m, n, "glb-direct", res.objective, opt,
                     _ratio(res.objective, opt), 144 * rounds_T(n), ms])
    else:
        rng = np.random.default_rng([seed, n])
        p = np.round(rng.uniform(0.1, 10, n), 3)
        z = np.round(rng.uniform(0, 5, n), 3)
        nl = NormLinInstance(p, z, float(rng.uniform(0, z.sum())), random_norm(rng, n), eps)
        ex = solve_normlin_exact(nl.p, nl.z, nl.Z, nl.psi)
        res, ms = _timed(lambda: solve_ptas(nl))
        rows.append([f"normlin-{n}-s{seed}", 1, n, "normlin-ptas", res.cost, ex.cost,
                     _ratio(res.cost, ex.cost), 1 + 143 * eps, ms])
    return rows


def cmd_bench(args) -> int:
    sizes = _parse_sizes(args.sizes)
    seeds = _parse_seeds(args.seeds)
    eps = args.epsilon if args.epsilon is not None else (0.5 if args.suite == "normlin" else 0.2)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for m, n in sizes:
            for seed in seeds:
                for row in _bench_rows(args.suite, m, n, seed, eps):
                    w.writerow(row[:8] + [f"{row[8]:.1f}"])
                    log.info("bench %s", row)
    return 0


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="normglb", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("kind", choices=["random", "setcover", "normlin"])
    g.add_argument("--m", type=int, default=3)
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--forbidden-prob", type=float, default=0.0)
    g.add_argument("--norms", choices=NORM_PROFILES, default="l1-linf")
    g.add_argument("--integral", action="store_true")
    g.add_argument("--sets", help="JSON list of lists of 1-based elements (setcover)")
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="run a solver and print a JSON result")
    s.add_argument("--algo", choices=ALGOS, required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--compare-exact", action="store_true")
    s.add_argument("--oracle", default="exact", help="NormLin strategy for glb-roc: exact or ptas(<eps>)")
    s.add_argument("--max-guesses", type=int, default=None)
    s.add_argument("--max-lps", type=int, default=None)
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--max-assignments", type=int, default=10**7)
    s.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    v = sub.add_parser("verify", help="run the norm property suites")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="write a benchmark CSV")
    b.add_argument("--suite", choices=["ratios", "setcover", "normlin"], required=True)
    b.add_argument("--sizes", default="3x3")
    b.add_argument("--seeds", default="0-4")
    b.add_argument("--epsilon", type=float, default=None)
    b.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "gen" and args.kind in ("random", "normlin") and args.n is None:
        args.n = 4
    if args.command == "gen" and args.kind == "setcover" and not args.sets:
        ap.print_usage(sys.stderr)
        print("normglb gen setcover: --sets is required", file=sys.stderr)
        return 2
    handler = {"gen": cmd_gen, "solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench}[args.command]
    try:
        return handler(args)
    except (DomainError, InstanceError, NotMaxTopK, TooLargeError, NoFeasibleGuess, ValueError, OSError) as exc:
        print(f"normglb: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
