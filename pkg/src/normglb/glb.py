"""Generalized load balancing: guesses, the configuration LP, rounding and merging.

For every normalization pair (i*, j*) and every guessed profile R of the
sorted optimal loads, the configuration LP P-LB(R, 1/2, 3/2) is solved either
over all configurations (direct mode) or by column generation driven by the
separation oracle (round-or-cut mode).  Feasible guesses are rounded
randomly, configurations are merged per machine, and the best resulting
assignment over all guesses is returned.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .exact import TooLargeError, subset_bits
from .guesses import GuessR, build_pos2, exceeds
from .instance import Assignment, Instance, ScaledInstance, loads, normalize, objective
from .lpcore import Infeasible, LinearProgram, Optimal, solve_feasibility
from .norms import sorted_desc
from .oracle import Certified, DualPoint, ExactStrategy, ViolatedColumn, normalization_value, separate

__all__ = [
    "build_pos2",
    "expand_R",
    "round_up_h",
    "enumerate_guess_R",
    "count_guess_R",
    "Columns",
    "enumerate_columns",
    "build_plb",
    "PlbSolution",
    "solve_plb_direct",
    "RocResult",
    "solve_plb_roc",
    "RoundingOutcome",
    "rounds_T",
    "randomized_round",
    "merge_and_assign",
    "ratio_chain_holds",
    "r_star",
    "GlbCaps",
    "GlbResult",
    "solve_glb",
    "NoFeasibleGuess",
]

log = logging.getLogger(__name__)

LAMBDA, TAU = 0.5, 1.5


def expand_R(R: GuessR) -> np.ndarray:
    return R.varrho


def round_up_h(R: GuessR, x):
    return R.h(x)


def _max_exp(m: int, n: int) -> int:
    # powers 2^0 .. 2^-e cover [1/(2mn), 1]
    return (2 * m * n).bit_length() - 1


def _distinct_cap(n: int) -> int:
    return n.bit_length() - 1 + 4


def enumerate_guess_R(m: int, n: int) -> Iterator[GuessR]:
    """Non-increasing POS-indexed powers of 2 in [1/(2mn), 1] with at most log2(n)+4 values."""
    pos = build_pos2(m)
    e = _max_exp(m, n)
    cap = _distinct_cap(n)
    for exps in itertools.combinations_with_replacement(range(0, -e - 1, -1), len(pos)):
        if len(set(exps)) <= cap:
            yield GuessR(pos, exps)


def count_guess_R(m: int, n: int) -> int:
    """Closed form for the stream length: choose d values and a composition of |POS| into d parts."""
    L = len(build_pos2(m))
    vals = _max_exp(m, n) + 1
    return sum(math.comb(vals, d) * math.comb(L - 1, d - 1)
               for d in range(1, min(L, _distinct_cap(n)) + 1))


# -- configurations ----------------------------------------------------------------

@dataclass
class Columns:
    """A batch of configurations (i, J) with cached costs psi_i(J)."""

    machine: np.ndarray     # (C,) int
    bits: np.ndarray        # (C, n) bool
    psi: np.ndarray         # (C,) float

    @property
    def size(self) -> int:
        return self.machine.size

    def take(self, idx) -> "Columns":
        return Columns(self.machine[idx], self.bits[idx], self.psi[idx])

    def jobs(self, c: int) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.bits[c]))

    @staticmethod
    def empty(n: int) -> "Columns":
        return Columns(np.zeros(0, dtype=np.int64), np.zeros((0, n), dtype=bool), np.zeros(0))

    @staticmethod
    def concat(parts: list["Columns"], n: int) -> "Columns":
        if not parts:
            return Columns.empty(n)
        return Columns(np.concatenate([c.machine for c in parts]),
                       np.concatenate([c.bits for c in parts]),
                       np.concatenate([c.psi for c in parts]))


def _machine_columns(inst: Instance, i: int, bits: np.ndarray) -> Columns:
    p = np.where(inst.allowed[i], inst.p[i], 0.0)
    psi = np.asarray(inst.inner_norms[i].evaluate(np.where(bits, p[None, :], 0.0)), dtype=float).reshape(-1)
    return Columns(np.full(bits.shape[0], i, dtype=np.int64), bits, psi)


def enumerate_columns(inst: Instance, tau: float, max_jobs: int = 12) -> Columns:
    """Every non-empty allowed (i, J) with psi_i(J) <= tau."""
    if inst.n > max_jobs:
        raise TooLargeError(f"direct enumeration capped at {max_jobs} jobs")
    parts = []
    for i in range(inst.m):
        items = np.flatnonzero(inst.allowed[i])
        local = subset_bits(items.size)[1:]
        bits = np.zeros((local.shape[0], inst.n), dtype=bool)
        bits[:, items] = local
        cols = _machine_columns(inst, i, bits)
        parts.append(cols.take(~exceeds(cols.psi, tau)))
    return Columns.concat(parts, inst.n)


@dataclass(frozen=True)
class PlbLayout:
    """Row blocks of a P-LB program."""

    n_pos: int
    m: int
    n: int
    has_cap_row: bool

    @property
    def machine_rows(self) -> slice:
        return slice(self.n_pos, self.n_pos + self.m)

    @property
    def job_rows(self) -> slice:
        return slice(self.n_pos + self.m, self.n_pos + self.m + self.n)

    @property
    def cap_row(self) -> int | None:
        return self.n_pos + self.m + self.n if self.has_cap_row else None

    @property
    def total_row(self) -> int:
        return self.n_pos + self.m + self.n + int(self.has_cap_row)


def _pos_coefficients(R: GuessR, psi: np.ndarray, tau: float) -> np.ndarray:
    hv = np.asarray(R.h(psi / tau), dtype=float).reshape(-1)
    return np.maximum(hv[None, :] - R.rho[:, None], 0.0)


def build_plb(m: int, n: int, R: GuessR, lam: float, tau: float, cols: Columns
              ) -> tuple[LinearProgram, PlbLayout]:
    """Feasibility program P-LB(R, lam, tau) restricted to ``cols`` (x >= 0)."""
    over = exceeds(cols.psi, tau)
    layout = PlbLayout(len(R.pos), m, n, bool(over.any()))
    C = cols.size
    blocks = [_pos_coefficients(R, cols.psi, tau).reshape(len(R.pos), C)]
    senses = ["<="] * len(R.pos)
    rhs = list(R.slack())
    blocks.append((cols.machine[None, :] == np.arange(m)[:, None]).astype(float))
    senses += ["<="] * m
    rhs += [1.0] * m
    blocks.append(cols.bits.T.astype(float).reshape(n, C))
    senses += [">="] * n
    rhs += [lam] * n
    if layout.has_cap_row:
        blocks.append(over.astype(float)[None, :])
        senses.append("<=")
        rhs.append(0.0)
    blocks.append(np.ones((1, C)))
    senses.append("<=")
    rhs.append(float(n))
    lp = LinearProgram(np.zeros(C), np.vstack(blocks), tuple(senses), np.array(rhs))
    return lp, layout


@dataclass
class PlbSolution:
    """A basic feasible point, kept as its support columns and values."""

    cols: Columns
    x: np.ndarray

    @property
    def support(self) -> int:
        return self.cols.size


def _support_check(sol: PlbSolution, n: int):
    if sol.support > 3 * n + 5:
        raise RuntimeError(f"basic solution has support {sol.support} > 3n+5")


def _presolve(R: GuessR, cols: Columns, tau: float) -> Columns:
    """Drop columns that a zero right-hand side in the top-k rows forces to 0."""
    coef = _pos_coefficients(R, cols.psi, tau)
    tight = R.slack() <= 1e-15
    dead = (coef[tight] > 0).any(axis=0)
    return cols.take(~dead)


def solve_plb_direct(inst: Instance, R: GuessR, cols: Columns | None = None,
                     lam: float = LAMBDA, tau: float = TAU) -> PlbSolution | None:
    """Basic feasible point of P-LB(R, lam, tau) over all columns; ``None`` if infeasible."""
    if cols is None:
        cols = enumerate_columns(inst, tau)
    cols = _presolve(R, cols, tau)
    if not cols.bits.any(axis=0).all():
        return None
    lp, _ = build_plb(inst.m, inst.n, R, lam, tau, cols)
    res = solve_feasibility(lp)
    if not isinstance(res, Optimal):
        return None
    keep = np.flatnonzero(res.x > 1e-12)
    sol = PlbSolution(cols.take(keep), res.x[keep])
    _support_check(sol, inst.n)
    return sol


# -- round-or-cut ------------------------------------------------------------------

FEASIBLE, REJECTED, ITERATION_CAP = "feasible", "rejected", "iteration_cap"


@dataclass
class RocResult:
    status: str
    solution: PlbSolution | None = None
    certificate: DualPoint | None = None
    iterations: int = 0
    columns: int = 0
    fallback_used: bool = False
    reason: str = ""


def _seed_columns(inst: Instance) -> Columns:
    parts = []
    for j in range(inst.n):
        single = np.where(inst.allowed[:, j], inst.p[:, j], np.inf)
        # cheapest single-job load; symmetric norms scale p_ij by psi_i(e_1)
        costs = np.array([inst.inner_norms[i].evaluate(np.array([1.0])) * single[i] for i in range(inst.m)])
        i = int(np.argmin(costs))
        bits = np.zeros((1, inst.n), dtype=bool)
        bits[0, j] = True
        parts.append(_machine_columns(inst, i, bits))
    return Columns.concat(parts, inst.n)


def _dual_from_certificate(cert: Infeasible, layout: PlbLayout, lam: float, R: GuessR
                           ) -> tuple[DualPoint, bool]:
    y = cert.certificate
    r = np.maximum(y[: layout.n_pos], 0.0)
    ym = np.maximum(y[layout.machine_rows], 0.0)
    z = np.maximum(-y[layout.job_rows], 0.0)
    s = max(float(y[layout.cap_row]), 0.0) if layout.has_cap_row else 0.0
    t = max(float(y[layout.total_row]), 0.0)
    dp = DualPoint(r, s, t, ym, z)
    val = normalization_value(dp, R, lam)
    if val > 1e-9:
        return dp.scaled(1.0 / val), False
    # degenerate scale: lift z until the normalization reads exactly 1
    lift = (1.0 - val) / (lam * z.size)
    return DualPoint(r, s, t, ym, z + lift), True


def solve_plb_roc(inst: Instance, R: GuessR, strategy=None, max_iters: int = 500,
                  lam: float = LAMBDA, tau: float = TAU) -> RocResult:
    """Column generation over P-LB(R, lam, tau) driven by the separation oracle.

    Infeasible restricted programs yield Farkas certificates, which are scaled
    into dual points and handed to the oracle: a violated column enters the
    restricted program, a certified point rejects the guess.
    """
    strategy = strategy if strategy is not None else ExactStrategy()
    cols = _seed_columns(inst)
    keys = {(int(cols.machine[c]), cols.bits[c].tobytes()) for c in range(cols.size)}
    fallback = False
    for it in range(1, max_iters + 1):
        lp, layout = build_plb(inst.m, inst.n, R, lam, tau, cols)
        res = solve_feasibility(lp)
        if isinstance(res, Optimal):
            keep = np.flatnonzero(res.x > 1e-12)
            sol = PlbSolution(cols.take(keep), res.x[keep])
            _support_check(sol, inst.n)
            return RocResult(FEASIBLE, sol, None, it, cols.size, fallback)
        dp, used = _dual_from_certificate(res, layout, lam, R)
        fallback |= used
        out = separate(dp, inst, R, strategy, lam, tau)
        if isinstance(out, Certified):
            return RocResult(REJECTED, None, out.point, it, cols.size, fallback)
        if not isinstance(out, ViolatedColumn):
            raise RuntimeError(f"scaled certificate failed the normalization: {out}")
        bits = np.zeros((1, inst.n), dtype=bool)
        bits[0, list(out.J)] = True
        key = (out.i, bits[0].tobytes())
        if key in keys:
            return RocResult(ITERATION_CAP, None, None, it, cols.size, fallback,
                             reason=f"oracle returned existing column {out.i}:{out.J}")
        keys.add(key)
        cols = Columns.concat([cols, _machine_columns(inst, out.i, bits)], inst.n)
    return RocResult(ITERATION_CAP, None, None, max_iters, cols.size, fallback, reason="iteration cap")


# -- rounding ----------------------------------------------------------------------

def rounds_T(n: int) -> int:
    return max(1, math.ceil(6 * math.log(n)))


@dataclass
class RoundingOutcome:
    success: bool
    T: int
    attempts: int
    selected: np.ndarray | None = None        # indices into the support columns
    merged: np.ndarray | None = None          # (m, n) bool, J_i per machine
    max_duplicates: int = 0
    covered: bool = False
    norm_slack: np.ndarray | None = None      # per k in POS: bound minus LHS of condition (c)
    failures: dict = field(default_factory=dict)

    @property
    def worst_condition(self) -> str | None:
        if not self.failures:
            return None
        return max(self.failures.items(), key=lambda kv: kv[1])[0]


def randomized_round(sol: PlbSolution, R: GuessR, m: int, n: int, rng_for_attempt,
                     attempts: int | None = None, T: int | None = None) -> RoundingOutcome:
    """Independent inclusion in T rounds, retried until conditions (a)-(c) hold.

    ``rng_for_attempt(a)`` returns the generator for attempt ``a``.  The
    selection I is the set of configurations drawn in at least one round.
    """
    T = rounds_T(n) if T is None else T
    attempts = 64 * n if attempts is None else attempts
    cols = sol.cols
    coef = _pos_coefficients(R, 2.0 * cols.psi / 3.0, 1.0)   # (K, C)
    bound = 2 * T * R.slack()
    fails = {"duplicates": 0, "coverage": 0, "norm": 0}
    x = np.clip(sol.x, 0.0, 1.0)
    for a in range(attempts):
        rng = rng_for_attempt(a)
        draws = rng.random((T, cols.size)) < x[None, :]
        sel = draws.any(axis=0)
        per_machine = np.bincount(cols.machine[sel], minlength=m)
        dup = int(per_machine.max(initial=0))
        covered = bool(cols.bits[sel].any(axis=0).all())
        slack = bound - coef[:, sel].sum(axis=1)
        ok_a = dup <= 6 * T
        ok_c = bool((slack >= -1e-9 * (1 + np.abs(bound))).all())
        if ok_a and covered and ok_c:
            merged = np.zeros((m, n), dtype=bool)
            for c in np.flatnonzero(sel):
                merged[cols.machine[c]] |= cols.bits[c]
            return RoundingOutcome(True, T, a + 1, np.flatnonzero(sel), merged, dup, True, slack, fails)
        fails["duplicates"] += not ok_a
        fails["coverage"] += not covered
        fails["norm"] += not ok_c
    return RoundingOutcome(False, T, attempts, failures=fails)


def merge_and_assign(outcome: RoundingOutcome, inst: Instance) -> Assignment:
    """Each job goes to the covering machine with the smallest p_ij (lowest index on ties)."""
    if not outcome.success or outcome.merged is None:
        raise ValueError("cannot assign from a failed rounding")
    cov = outcome.merged
    if not cov.any(axis=0).all():
        raise RuntimeError("merged configurations leave a job uncovered")
    cost = np.where(cov & inst.allowed, inst.p, np.inf)
    return Assignment(tuple(int(i) for i in np.argmin(cost, axis=0)))


def ratio_chain_holds(inst: Instance, outcome: RoundingOutcome, R: GuessR, rtol: float = 1e-9) -> bool:
    """Top_k(v) <= 9T Top_k(varrho) on POS and <= 18T Top_k(varrho) elsewhere, v_i = psi_i(J_i)."""
    v = np.array([inst.psi(i, np.flatnonzero(outcome.merged[i])) for i in range(inst.m)])
    tv = np.cumsum(sorted_desc(v))
    tr = R.top_varrho
    T = outcome.T
    factor = np.array([9 * T if k in R.pos else 18 * T for k in range(1, inst.m + 1)], dtype=float)
    return bool((tv <= factor * tr * (1 + rtol)).all())


# -- optimum-derived guess -----------------------------------------------------------

def r_star(inst: Instance, sigma: Assignment) -> tuple[ScaledInstance, GuessR]:
    """Normalization and profile read off an assignment (typically an optimum).

    i* is the most loaded machine and j* its largest job (lowest indices on
    ties); rho_k is the power of 2 in [o_k, 2 o_k), with loads below o_1/(2m)
    lifted to that floor first.
    """
    ld = loads(inst, sigma)
    i_star = int(np.argmax(ld))
    jobs = sigma.jobs_on(i_star)
    j_star = int(jobs[int(np.argmax(inst.p[i_star, jobs]))])
    sc = normalize(inst, i_star, j_star)
    o = sorted_desc(loads(sc.inst, sigma))
    floor = o[0] / (2 * inst.m)
    pos = build_pos2(inst.m)
    exps = []
    for k in pos:
        v = max(o[k - 1], floor)
        mant, e = math.frexp(v)
        exps.append(e - 1 if mant == 0.5 else e)
    return sc, GuessR(pos, tuple(exps))


# -- driver --------------------------------------------------------------------------

class NoFeasibleGuess(RuntimeError):
    """No guess led to a rounded assignment."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class GlbCaps:
    direct_max_jobs: int = 12
    roc_max_iters: int = 500
    attempts_per_n: int = 64
    max_guesses: int | None = None


@dataclass
class GlbResult:
    assignment: Assignment
    objective: float
    diagnostics: dict

    def to_dict(self) -> dict:
        d = {"assignment": [i + 1 for i in self.assignment.sigma], "objective": self.objective}
        d.update(self.diagnostics)
        return d


@dataclass
class _GuessEval:
    feasible: bool
    status: str
    attempts: int = 0
    assignment: Assignment | None = None
    phi: float = math.inf
    support: int = 0
    chain_ok: bool = True
    fallback: bool = False


def _rng_factory(seed: int, guess_index: int):
    return lambda a: np.random.default_rng(np.random.SeedSequence([seed, guess_index, a]))


def _evaluate_guess(base: Instance, sc: ScaledInstance, R: GuessR, mode: str, cols: Columns | None,
                    strategy, caps: GlbCaps, seed: int, gidx: int) -> _GuessEval:
    if mode == "direct":
        sol = solve_plb_direct(sc.inst, R, cols)
        status = FEASIBLE if sol is not None else "infeasible"
        fb = False
    else:
        roc = solve_plb_roc(sc.inst, R, strategy, caps.roc_max_iters)
        sol, status, fb = roc.solution, roc.status, roc.fallback_used
    if sol is None:
        return _GuessEval(False, status, fallback=fb)
    out = randomized_round(sol, R, base.m, base.n, _rng_factory(seed, gidx),
                           attempts=caps.attempts_per_n * base.n)
    if not out.success:
        return _GuessEval(True, status, out.attempts, support=sol.support, fallback=fb)
    chain = ratio_chain_holds(sc.inst, out, R)
    if not chain:
        raise RuntimeError("rounded loads break the derived top-k bound")
    a = merge_and_assign(out, base)
    return _GuessEval(True, status, out.attempts, a, objective(base, a), sol.support, chain, fb)


def solve_glb(inst: Instance, mode: str = "direct", seed: int = 0, caps: GlbCaps = GlbCaps(),
              strategy=None, workers: int = 1) -> GlbResult:
    """Best rounded assignment over all (i*, j*, R) guesses.

    Guesses are evaluated independently (optionally on ``workers`` threads)
    and reduced in stream order, keeping the strict minimum objective.
    """
    if mode not in ("direct", "roc"):
        raise ValueError("mode must be 'direct' or 'roc'")
    strategy = strategy if strategy is not None else ExactStrategy()
    diag = {"mode": mode, "seed": seed, "guesses_total": 0, "guesses_feasible": 0,
            "rounding_attempts": 0, "rounding_failures": 0, "iteration_caps": 0,
            "scales": 0, "certificate_fallbacks": 0, "max_support": 0}
    best: tuple[float, Assignment, dict] | None = None
    seen_scales = set()
    gidx = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for i_star in range(inst.m):
            for j_star in range(inst.n):
                if not inst.allowed[i_star, j_star]:
                    continue
                sc = normalize(inst, i_star, j_star)
                if sc.scale in seen_scales:
                    continue
                seen_scales.add(sc.scale)
                diag["scales"] += 1
                cols = enumerate_columns(sc.inst, TAU, caps.direct_max_jobs) if mode == "direct" else None
                guesses = list(enumerate_guess_R(inst.m, inst.n))
                if caps.max_guesses is not None:
                    guesses = guesses[: max(0, caps.max_guesses - diag["guesses_total"])]
                idx = list(range(gidx, gidx + len(guesses)))
                gidx += len(guesses)
                args = [(inst, sc, R, mode, cols, strategy, caps, seed, g) for R, g in zip(guesses, idx)]
                if pool is None:
                    evals = [_evaluate_guess(*a) for a in args]
                else:
                    evals = list(pool.map(lambda a: _evaluate_guess(*a), args))
                for R, ev in zip(guesses, evals):
                    diag["guesses_total"] += 1
                    diag["iteration_caps"] += ev.status == ITERATION_CAP
                    diag["certificate_fallbacks"] += ev.fallback
                    if not ev.feasible:
                        continue
                    diag["guesses_feasible"] += 1
                    diag["rounding_attempts"] += ev.attempts
                    diag["max_support"] = max(diag["max_support"], ev.support)
                    if ev.assignment is None:
                        diag["rounding_failures"] += 1
                        continue
                    if best is None or ev.phi < best[0]:
                        best = (ev.phi, ev.assignment,
                                {"i_star": i_star + 1, "j_star": j_star + 1, "R": [2.0 ** e for e in R.exps]})
    finally:
        if pool is not None:
            pool.shutdown()
    if best is None:
        raise NoFeasibleGuess("no guess produced an assignment", diag)
    diag["best_guess"] = best[2]
    log.info("glb %s: %d guesses, %d feasible, best %.6g", mode, diag["guesses_total"],
             diag["guesses_feasible"], best[0])
    return GlbResult(best[1], best[0], diag)
