"""Deterministic (3 + 7 eps)-approximation when every machine is Top_{k_i} and the outer norm is L_inf.

Guess the largest optimal job size o_1 and a profile rho over POS, solve the
LP M-Top, then round with machine copies: machine i gets ceil(sum_j x_ij)
unit slots filled by its fractional jobs in non-increasing size order, and
an integral job-to-slot matching is read off a vertex of the bipartite
matching polytope.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .guesses import Pos, build_pos_iterative, ceil_log
from .instance import Assignment, Instance, objective
from .lpcore import LinearProgram, Optimal, solve, solve_feasibility
from .norms import LpNorm, TopK

__all__ = [
    "NotMaxTopK",
    "MaxTopKGuess",
    "reduce_k",
    "machine_ks",
    "enumerate_guesses",
    "build_mtop_lp",
    "shmoys_tardos_round",
    "RoundingCheckError",
    "MaxTopKResult",
    "solve_maxtopk",
    "guess_from_assignment",
]

P_RTOL = 1e-12


class NotMaxTopK(ValueError):
    pass


class RoundingCheckError(RuntimeError):
    """The copy rounding broke one of its structural guarantees."""


def reduce_k(k: int, pos: Pos) -> int:
    return k if k in pos else pos.prev(k)


def machine_ks(inst: Instance) -> tuple[int, ...]:
    """k_i of every machine (clamped to n); raises NotMaxTopK on any other norm shape."""
    out = inst.outer_norm
    if not (isinstance(out, LpNorm) and math.isinf(out.p)):
        raise NotMaxTopK("instance is not GLB-MaxTopK: outer norm must be L_inf")
    ks = []
    for nm in inst.inner_norms:
        if not isinstance(nm, TopK):
            raise NotMaxTopK("instance is not GLB-MaxTopK: inner norms must be TopK")
        ks.append(min(nm.k, inst.n))
    return tuple(ks)


@dataclass(frozen=True)
class MaxTopKGuess:
    epsilon: float
    pos: Pos
    k_prime: tuple[int, ...]
    o1: float
    exps: tuple[int, ...]      # rho_k = (1+eps)^exps[k], one per POS index

    @property
    def rho(self) -> np.ndarray:
        return np.array([(1 + self.epsilon) ** e for e in self.exps])

    def rho_at(self, k: int) -> float:
        return float((1 + self.epsilon) ** self.exps[self.pos.indices.index(k)])

    def to_dict(self) -> dict:
        return {"o1": self.o1, "rho": [float(v) for v in self.rho], "k_prime": list(self.k_prime)}


def _setup(inst: Instance, eps: float):
    ks = machine_ks(inst)
    pos = build_pos_iterative(inst.n, eps)
    kp = tuple(reduce_k(k, pos) for k in ks)
    cands = np.unique(inst.p[inst.allowed])
    return pos, kp, cands


def _exp_range(o1: float, n: int, eps: float) -> tuple[int, int]:
    return ceil_log(o1, 1 + eps), ceil_log(eps * o1 / n, 1 + eps)


def enumerate_guesses(inst: Instance, eps: float) -> Iterator[MaxTopKGuess]:
    """Every o_1 candidate (distinct finite p, ascending) with every valid profile."""
    pos, kp, cands = _setup(inst, eps)
    for o1 in cands:
        top, floor = _exp_range(float(o1), inst.n, eps)
        for rest in itertools.combinations_with_replacement(range(top, floor - 1, -1), len(pos) - 1):
            yield MaxTopKGuess(eps, pos, kp, float(o1), (top,) + rest)


@dataclass
class MtopLP:
    lp: LinearProgram
    pairs: np.ndarray          # (V, 2) machine, job of each x variable; r is the last variable


def build_mtop_lp(inst: Instance, guess: MaxTopKGuess) -> MtopLP | None:
    """LP M-Top; ``None`` when some job has no machine left after the size cut."""
    rho1 = guess.rho_at(1)
    ok = inst.allowed & (np.where(inst.allowed, inst.p, np.inf) <= rho1 * (1 + P_RTOL))
    if not ok.any(axis=0).all():
        return None
    pairs = np.argwhere(ok)
    V = pairs.shape[0]
    m, n = inst.m, inst.n
    A = np.zeros((m + n, V + 1))
    for v, (i, j) in enumerate(pairs):
        A[i, v] = max(inst.p[i, j] - guess.rho_at(guess.k_prime[i]), 0.0)
        A[m + j, v] = 1.0
    A[:m, V] = -1.0
    c = np.zeros(V + 1)
    c[V] = 1.0
    lp = LinearProgram(c, A, ("<=",) * m + ("==",) * n, np.concatenate([np.zeros(m), np.ones(n)]))
    return MtopLP(lp, pairs)


def _fill_copies(xbar: np.ndarray, inst: Instance, tol: float = 1e-9):
    """Fractional copy assignment: list of (machine, copy, job, amount) in fill order."""
    pieces = []
    for i in range(inst.m):
        jobs = np.flatnonzero(xbar[i] > tol)
        if jobs.size == 0:
            continue
        jobs = jobs[np.lexsort((jobs, -inst.p[i, jobs]))]
        copy, room = 0, 1.0
        for j in jobs:
            left = float(xbar[i, j])
            while left > tol:
                put = min(left, room)
                pieces.append((i, copy, int(j), put))
                left -= put
                room -= put
                if room <= tol:
                    copy, room = copy + 1, 1.0
    return pieces


def shmoys_tardos_round(xbar: np.ndarray, inst: Instance) -> Assignment:
    """Integral assignment from a feasible M-Top point ``xbar`` (m x n)."""
    xbar = np.asarray(xbar, dtype=float)
    pieces = _fill_copies(xbar, inst)
    slots = sorted({(i, c) for i, c, _, _ in pieces})
    slot_id = {s: k for k, s in enumerate(slots)}
    edges = sorted({(slot_id[(i, c)], j) for i, c, j, _ in pieces})
    E = len(edges)
    A = np.zeros((len(slots) + inst.n, E))
    for e, (s, j) in enumerate(edges):
        A[s, e] = 1.0
        A[len(slots) + j, e] = 1.0
    lp = LinearProgram(np.zeros(E), A, ("<=",) * len(slots) + ("==",) * inst.n,
                       np.concatenate([np.ones(len(slots)), np.ones(inst.n)]))
    res = solve_feasibility(lp)
    if not isinstance(res, Optimal):
        raise RoundingCheckError("fractional copy matching has no integral completion")
    x = res.x
    if np.abs(x - np.round(x)).max(initial=0) > 1e-6:
        raise RoundingCheckError("matching vertex is not integral")
    sigma = [-1] * inst.n
    chosen = {}
    for e in np.flatnonzero(x > 0.5):
        s, j = edges[e]
        sigma[j] = slots[s][0]
        chosen.setdefault(s, []).append(j)
    if min(sigma) < 0:
        raise RoundingCheckError("a job was left unmatched")
    _check_copy_order(pieces, slots, chosen, inst)
    return Assignment(tuple(sigma))


def _check_copy_order(pieces, slots, chosen, inst: Instance, rtol: float = 1e-9):
    """Job on copy t >= 2 is no larger than the fractional average size on copy t-1."""
    mass, weighted = {}, {}
    for i, c, j, a in pieces:
        mass[(i, c)] = mass.get((i, c), 0.0) + a
        weighted[(i, c)] = weighted.get((i, c), 0.0) + a * inst.p[i, j]
    for k, (i, c) in enumerate(slots):
        if c == 0:
            continue
        avg = weighted[(i, c - 1)] / mass[(i, c - 1)]
        for j in chosen.get(k, []):
            if inst.p[i, j] > avg * (1 + rtol) + 1e-12:
                raise RoundingCheckError(f"copy {c} of machine {i} holds job {j} above the previous copy's average")


@dataclass
class MaxTopKResult:
    assignment: Assignment
    objective: float
    diagnostics: dict

    def to_dict(self) -> dict:
        d = {"assignment": [i + 1 for i in self.assignment.sigma], "objective": self.objective}
        d.update(self.diagnostics)
        return d


def _candidate_exps(inst: Instance, top: int, floor: int, eps: float) -> list[int]:
    vals = {ceil_log(float(v), 1 + eps) for v in np.unique(inst.p[inst.allowed])}
    vals = {e for e in vals if floor <= e <= top} | {floor, top}
    return sorted(vals, reverse=True)


def _lift(pos: Pos, keys: list[int], vals: tuple[int, ...]) -> tuple[int, ...]:
    """Full POS profile carrying each projected value forward to the next projected index."""
    out, t = [], 0
    for k in pos:
        while t + 1 < len(keys) and keys[t + 1] <= k:
            t += 1
        out.append(vals[t])
    return tuple(out)


def solve_maxtopk(inst: Instance, eps: float = 0.2, max_lps: int | None = None) -> MaxTopKResult:
    """Best rounded assignment over all guesses.

    Only rho_1 and rho at the reduced indices k_i' enter the LP, so guesses
    are searched by those projected values; each value ranges over the
    rounded-up job sizes plus the floor power, which contains the profile of
    every optimum.  Guesses whose size cut strands a job are skipped without
    an LP.
    """
    if not 0 < eps <= 0.5:
        raise ValueError("epsilon must lie in (0, 1/2]")
    pos, kp, cands = _setup(inst, eps)
    keys = sorted(set(kp) | {1})
    seen = set()
    diag = {"epsilon": eps, "guarantee": 3 + 7 * eps, "o1_candidates": int(cands.size),
            "guesses_total": 0, "lps_solved": 0, "skipped": 0, "truncated": False}
    best = None
    for o1 in cands:
        top, floor = _exp_range(float(o1), inst.n, eps)
        values = _candidate_exps(inst, top, floor, eps)
        for rest in itertools.combinations_with_replacement(values, len(keys) - 1):
            proj = (top,) + rest
            if proj in seen:
                continue
            seen.add(proj)
            diag["guesses_total"] += 1
            guess = MaxTopKGuess(eps, pos, kp, float(o1), _lift(pos, keys, proj))
            built = build_mtop_lp(inst, guess)
            if built is None:
                diag["skipped"] += 1
                continue
            if max_lps is not None and diag["lps_solved"] >= max_lps:
                diag["truncated"] = True
                break
            res = solve(built.lp)
            diag["lps_solved"] += 1
            if not isinstance(res, Optimal):
                diag["skipped"] += 1
                continue
            xbar = np.zeros((inst.m, inst.n))
            xbar[built.pairs[:, 0], built.pairs[:, 1]] = np.clip(res.x[:-1], 0.0, None)
            a = shmoys_tardos_round(xbar, inst)
            phi = objective(inst, a)
            if best is None or phi < best[0]:
                best = (phi, a, guess, float(res.x[-1]))
    if best is None:
        raise RuntimeError("no guess produced an assignment")
    diag["best_guess"] = best[2].to_dict()
    diag["lp_value"] = best[3]
    return MaxTopKResult(best[1], best[0], diag)


def guess_from_assignment(inst: Instance, sigma: Assignment, eps: float) -> MaxTopKGuess:
    """Profile read off an assignment: o_k is the largest k-th job size over machines with k_i' >= k."""
    pos, kp, _ = _setup(inst, eps)
    n = inst.n
    o = np.zeros(n)
    for i in range(inst.m):
        sizes = np.sort(inst.p[i, sigma.jobs_on(i)])[::-1]
        lim = min(kp[i], sizes.size)
        o[:lim] = np.maximum(o[:lim], sizes[:lim])
    o1 = float(o[0])
    top, floor = _exp_range(o1, n, eps)
    exps = []
    for k in pos:
        v = o[k - 1]
        exps.append(ceil_log(v, 1 + eps) if v >= eps * o1 / n else floor)
    return MaxTopKGuess(eps, pos, kp, o1, tuple(exps))
