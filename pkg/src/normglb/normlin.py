"""Approximation scheme for NormLin: min psi(p<J>) subject to sum_{j in J} z_j >= Z.

Pipeline: round sizes up to powers of (1+eps), guess the largest-size item j1
and the largest-value item j2 of an optimum, guess a geometric profile R of
its sorted sizes and, per size class, how many optimal items it holds; solve
the LP relaxation and keep the best value-greedy rounding over all guesses.

All size arithmetic happens on integer exponents of (1+eps), so class
membership never depends on floating logarithms.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .guesses import GuessR, Pos, build_pos_iterative, ceil_log
from .lpcore import LinearProgram, Optimal, solve_feasibility
from .norms import NormSpec

__all__ = [
    "NormLinInstance",
    "NormLinGuess",
    "PtasResult",
    "build_pos_iterative",
    "round_up_powers",
    "enumerate_guesses",
    "count_guesses",
    "build_nlin_lp",
    "round_nlin",
    "solve_ptas",
    "guess_from_solution",
    "RoundingError",
]

ZTOL = 1e-9


class RoundingError(RuntimeError):
    """An LP solution and its guess disagree on class cardinalities."""


@dataclass(frozen=True, eq=False)
class NormLinInstance:
    p: np.ndarray
    z: np.ndarray
    Z: float
    psi: NormSpec
    epsilon: float = 0.5

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(-1)
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if p.shape != z.shape or p.size == 0:
            raise ValueError("p and z must be non-empty vectors of equal length")
        if not (np.isfinite(p).all() and np.isfinite(z).all()) or (p < 0).any() or (z < 0).any():
            raise ValueError("p and z must be finite and nonnegative")
        if not math.isfinite(self.Z) or self.Z < 0:
            raise ValueError("Z must be finite and nonnegative")
        if not 0 < self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in (0, 1/2]")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "Z", float(self.Z))

    @property
    def n(self) -> int:
        return self.p.size

    def cost(self, J) -> float:
        u = np.zeros(self.n)
        J = list(J)
        u[J] = self.p[J]
        return float(self.psi.evaluate(u))

    @property
    def positive(self) -> np.ndarray:
        """Items with p > 0; the others are free and accepted up front."""
        return np.flatnonzero(self.p > 0)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.p == 0)

    @property
    def residual_Z(self) -> float:
        return max(0.0, self.Z - float(self.z[self.free].sum()))


def round_up_powers(p, eps: float) -> np.ndarray:
    """Each positive entry rounded up to the nearest integer power of (1+eps)."""
    p = np.asarray(p, dtype=float)
    if (p <= 0).any():
        raise ValueError("round_up_powers needs p > 0")
    return np.array([(1 + eps) ** ceil_log(v, 1 + eps) for v in p.reshape(-1)]).reshape(p.shape)


def _exponents(p: np.ndarray, eps: float) -> np.ndarray:
    return np.array([ceil_log(v, 1 + eps) for v in p], dtype=np.int64)


def _class_cap(eps: float) -> int:
    return math.ceil(1 / eps - 1e-12)


@dataclass(frozen=True)
class NormLinGuess:
    """One guess: anchors j1/j2 (original item indices), profile R and class labels.

    ``labels`` maps each exponent of R to -1 (more than ceil(1/eps) optimal
    items in that class) or to the exact count in 0..ceil(1/eps).
    """

    j1: int
    j2: int
    R: GuessR
    labels: dict = field(hash=False)

    @property
    def pos(self) -> Pos:
        return self.R.pos

    @property
    def pwr(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.R.exps)))


@dataclass(frozen=True)
class _Anchored:
    """Instance restricted to the items that survive rescaling by (j1, j2)."""

    items: np.ndarray      # original indices
    e: np.ndarray          # size exponents relative to j1 (all <= 0)
    z: np.ndarray          # values divided by z_{j2} (all <= 1)
    p: np.ndarray          # original sizes, for tie-breaking
    Z: float


def _anchor(inst: NormLinInstance, exps: np.ndarray, pos_items: np.ndarray, j1: int, j2: int) -> _Anchored:
    loc1 = int(np.flatnonzero(pos_items == j1)[0])
    e = exps - exps[loc1]
    zr = inst.z[pos_items] / inst.z[j2]
    keep = (e <= 0) & (zr <= 1 + 1e-12)
    return _Anchored(pos_items[keep], e[keep], zr[keep], inst.p[pos_items[keep]], inst.residual_Z / inst.z[j2])


def _floor_exp(n: int, eps: float) -> int:
    return ceil_log(eps / n, 1 + eps)


def _profiles(pos: Pos, floor: int) -> Iterator[tuple[int, ...]]:
    """Non-increasing exponent vectors over POS with first entry 0 and entries >= floor."""
    vals = range(0, floor - 1, -1)
    for rest in itertools.combinations_with_replacement(vals, len(pos) - 1):
        yield (0,) + rest


def _classes(e: np.ndarray, pwr: np.ndarray) -> np.ndarray:
    """Position in ``pwr`` (ascending) of the smallest exponent >= e, clamped to the first."""
    return np.searchsorted(pwr, e, side="left")


def enumerate_guesses(inst: NormLinInstance) -> Iterator[NormLinGuess]:
    """Exhaustive deterministic stream over (j1, j2, R, labels) on the positive items."""
    eps = inst.epsilon
    items = inst.positive
    n = items.size
    if n == 0:
        return
    pos = build_pos_iterative(n, eps)
    floor = _floor_exp(n, eps)
    labels = list(range(-1, _class_cap(eps) + 1))
    for j1 in items:
        for j2 in items:
            for exps in _profiles(pos, floor):
                R = GuessR(pos, exps, base=1 + eps, saturate=False)
                pwr = sorted(set(exps))
                for lab in itertools.product(labels, repeat=len(pwr)):
                    yield NormLinGuess(int(j1), int(j2), R, dict(zip(pwr, lab)))


def count_guesses(n: int, eps: float) -> int:
    """Length of ``enumerate_guesses`` for n positive items, by a closed-form sum."""
    L0 = len(build_pos_iterative(n, eps))
    below = -_floor_exp(n, eps)
    per = sum(math.comb(below, d - 1) * math.comb(L0 - 1, d - 1) * (_class_cap(eps) + 2) ** d
              for d in range(1, L0 + 1))
    return n * n * per


def _rows(R: GuessR, cls_exp_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-(1) coefficients per class value (K x q) and right-hand sides (K)."""
    coef = np.maximum(cls_exp_values[None, :] - R.rho[:, None], 0.0)
    return coef, R.slack()


def build_nlin_lp(inst: NormLinInstance, guess: NormLinGuess) -> tuple[LinearProgram, np.ndarray]:
    """The relaxation for one guess; returns the LP and the original index of each variable."""
    eps = inst.epsilon
    pos_items = inst.positive
    anc = _anchor(inst, _exponents(inst.p[pos_items], eps), pos_items, guess.j1, guess.j2)
    R = guess.R
    pwr = np.array(guess.pwr)
    cls = _classes(anc.e, pwr)
    hval = (1 + eps) ** pwr[cls].astype(float)
    nv = anc.items.size
    rows, senses, rhs = [], [], []
    slack = R.slack()
    for t, rk in enumerate(R.rho):
        rows.append(np.maximum(hval - rk, 0.0))
        senses.append("<=")
        rhs.append(slack[t])
    rows.append(anc.z)
    senses.append(">=")
    rhs.append(anc.Z)
    cap = _class_cap(eps)
    for q, s in enumerate(pwr):
        lab = guess.labels[int(s)]
        rows.append((cls == q).astype(float))
        if lab >= 0:
            senses.append("==")
            rhs.append(float(lab))
        else:
            senses.append(">=")
            rhs.append(float(cap + 1))
    A = np.array(rows).reshape(len(rows), nv)
    lp = LinearProgram(np.zeros(nv), A, tuple(senses), np.array(rhs), np.zeros(nv), np.ones(nv))
    return lp, anc.items


def _value_order(z: np.ndarray, p: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # largest z first; ties by smaller p, then lower index
    return np.lexsort((idx, p, -z))


def round_nlin(xbar, items: np.ndarray, inst: NormLinInstance, guess: NormLinGuess) -> tuple[int, ...]:
    """Class-wise greedy rounding of a feasible LP point; returns original item indices."""
    xbar = np.asarray(xbar, dtype=float)
    eps = inst.epsilon
    e = _exponents(inst.p[items], eps) - ceil_log(inst.p[guess.j1], 1 + eps)
    pwr = np.array(guess.pwr)
    cls = _classes(e, pwr)
    z, p = inst.z[items], inst.p[items]
    chosen: list[int] = []
    for q, s in enumerate(pwr):
        members = np.flatnonzero(cls == q)
        lab = guess.labels[int(s)]
        need = lab if lab >= 0 else math.ceil(float(xbar[members].sum()) - 1e-7)
        if need > members.size:
            raise RoundingError(f"class {int(s)} needs {need} items but holds {members.size}")
        order = members[_value_order(z[members], p[members], items[members])]
        chosen.extend(int(items[j]) for j in order[:need])
    return tuple(sorted(chosen + [int(j) for j in inst.free]))


@dataclass
class PtasResult:
    J: tuple[int, ...] | None
    cost: float
    guesses_evaluated: int
    lps_solved: int
    truncated: bool
    best_guess: NormLinGuess | None = None

    @property
    def feasible(self) -> bool:
        return self.J is not None

    def to_dict(self) -> dict:
        return {
            "J": None if self.J is None else [j + 1 for j in self.J],
            "cost": self.cost,
            "guesses_evaluated": self.guesses_evaluated,
            "lps_solved": self.lps_solved,
            "truncated": self.truncated,
        }


class _Search:
    """Guess search grouped by anchors and profiles, vectorised over labelings.

    For a fixed profile every item of a class has the same row-(1)
    coefficient, so a labeling's rows depend only on class masses.  When no
    class is labelled -1 the masses are fixed, the LP is feasible exactly
    when the mass-based checks pass, and the rounding is the same top-t pick
    whatever LP point is used; such guesses skip the simplex.  Labels that
    exceed a class size are dropped since their LPs are infeasible.
    """

    def __init__(self, inst: NormLinInstance, max_guesses: int | None, lp_every_guess: bool = False):
        self.inst = inst
        self.lp_every_guess = lp_every_guess
        self.eps = inst.epsilon
        self.cap = _class_cap(self.eps)
        self.max_guesses = max_guesses
        self.evaluated = 0
        self.lps = 0
        self.truncated = False
        self.best: tuple[float, tuple[int, ...], NormLinGuess | None] | None = None
        self._cost_cache: dict[tuple[int, ...], float] = {}

    def _offer(self, J: tuple[int, ...], guess_fn):
        c = self._cost_cache.get(J)
        if c is None:
            c = self._cost_cache[J] = self.inst.cost(J)
        if self.best is None or c < self.best[0]:
            self.best = (c, J, guess_fn())

    def run(self):
        inst, eps = self.inst, self.eps
        items = inst.positive
        n = items.size
        pos = build_pos_iterative(n, eps)
        floor = _floor_exp(n, eps)
        exps = _exponents(inst.p[items], eps)
        seen_anchor = set()
        for j1 in items:
            for j2 in items:
                if inst.z[j2] <= 0:
                    continue
                key = (int(exps[items == j1][0]), float(inst.z[j2]))
                loc2 = int(np.flatnonzero(items == j2)[0])
                # j2 must survive the size cut of j1, and j1 the value cut of j2
                if exps[loc2] > key[0] or inst.z[j1] > inst.z[j2] or key in seen_anchor:
                    continue
                seen_anchor.add(key)
                anc = _anchor(inst, exps, items, int(j1), int(j2))
                if anc.z.sum() < anc.Z - ZTOL:
                    continue
                for prof in _profiles(pos, floor):
                    if self._profile(int(j1), int(j2), anc, GuessR(pos, prof, base=1 + eps, saturate=False)):
                        return

    def _profile(self, j1, j2, anc: _Anchored, R: GuessR) -> bool:
        eps, cap = self.eps, self.cap
        pwr = np.array(sorted(set(R.exps)))
        cls = _classes(anc.e, pwr)
        sizes = np.bincount(cls, minlength=pwr.size)
        base = 1 + eps
        # label domains: empty classes must be 0
        domains = []
        for q in range(pwr.size):
            d = list(range(0, min(cap, sizes[q]) + 1))
            if sizes[q] >= cap + 1:
                d.append(-1)
            domains.append(d)
        labs = np.array(list(itertools.product(*domains)), dtype=np.int64).reshape(-1, pwr.size)
        self.evaluated += labs.shape[0]
        if self.max_guesses is not None and self.evaluated > self.max_guesses:
            self.truncated = True
            return True
        coef, rhs = _rows(R, base ** pwr.astype(float))
        is_big = labs < 0
        mass_lo = np.where(is_big, cap + 1, labs)
        ok = (mass_lo @ coef.T <= rhs[None, :] + 1e-9 * (1 + np.abs(rhs))).all(axis=1)
        # best reachable value per class and label
        order_per = []
        zbest = np.zeros((pwr.size, cap + 2))   # column cap+1 stands for label -1
        for q in range(pwr.size):
            members = np.flatnonzero(cls == q)
            order = members[_value_order(anc.z[members], anc.p[members], anc.items[members])]
            order_per.append(order)
            cz = np.concatenate([[0.0], np.cumsum(anc.z[order])])
            for t in range(0, min(cap, sizes[q]) + 1):
                zbest[q, t] = cz[t]
            zbest[q, cap + 1] = cz[-1]
        col = np.where(is_big, cap + 1, labs)
        zmax = zbest[np.arange(pwr.size)[None, :], col].sum(axis=1)
        ok &= zmax >= anc.Z - ZTOL * max(1.0, anc.Z)
        free = tuple(int(j) for j in self.inst.free)
        for row in np.flatnonzero(ok):
            lab = labs[row]
            guess_fn = lambda lab=lab: NormLinGuess(j1, j2, R, {int(s): int(t) for s, t in zip(pwr, lab)})
            if not is_big[row].any() and not self.lp_every_guess:
                J = [int(anc.items[j]) for q in range(pwr.size) for j in order_per[q][:lab[q]]]
                self._offer(tuple(sorted(J + list(free))), guess_fn)
                continue
            guess = guess_fn()
            lp, vitems = build_nlin_lp(self.inst, guess)
            self.lps += 1
            res = solve_feasibility(lp)
            if isinstance(res, Optimal):
                J = round_nlin(res.x, vitems, self.inst, guess)
                self._offer(J, lambda g=guess: g)
        return False


def solve_ptas(inst: NormLinInstance, max_guesses: int | None = None,
               lp_every_guess: bool = False) -> PtasResult:
    """Best rounded solution over all guesses; ``J is None`` iff sum(z) < Z.

    ``max_guesses`` caps the number of labelings examined; hitting it returns
    the best solution found so far with ``truncated`` set.  ``lp_every_guess``
    disables the LP-free shortcut (for cross-checking).
    """
    if inst.Z <= ZTOL:
        return PtasResult((), 0.0, 0, 0, False)
    if inst.z.sum() < inst.Z - ZTOL * max(1.0, inst.Z):
        return PtasResult(None, math.inf, 0, 0, False)
    free = tuple(int(j) for j in inst.free)
    if inst.residual_Z <= ZTOL:
        return PtasResult(free, inst.cost(free), 0, 0, False)
    search = _Search(inst, max_guesses, lp_every_guess)
    search.run()
    if search.best is None:
        if search.truncated:
            return PtasResult(None, math.inf, search.evaluated, search.lps, True)
        raise RuntimeError("no guess produced a solution on a feasible NormLin instance")
    cost, J, guess = search.best
    return PtasResult(J, cost, search.evaluated, search.lps, search.truncated, guess)


def guess_from_solution(inst: NormLinInstance, J) -> NormLinGuess:
    """The guess read off a solution J on the rounded sizes (anchors, profile, class counts)."""
    eps = inst.epsilon
    items = inst.positive
    n = items.size
    Jpos = np.array(sorted(j for j in J if inst.p[j] > 0), dtype=np.int64)
    if Jpos.size == 0:
        raise ValueError("solution has no positive-size item")
    pos = build_pos_iterative(n, eps)
    floor = _floor_exp(n, eps)
    ex = _exponents(inst.p[Jpos], eps)
    # ties: lowest index among the largest
    j1 = int(Jpos[np.argmax(ex)])
    j2 = int(Jpos[np.argmax(inst.z[Jpos])])
    rel = np.sort(ex - ex.max())[::-1]
    prof = []
    for k in pos:
        prof.append(max(int(rel[k - 1]), floor) if k <= rel.size else floor)
    R = GuessR(pos, tuple(prof), base=1 + eps, saturate=False)
    pwr = np.array(sorted(set(prof)))
    all_e = _exponents(inst.p[items], eps) - ex.max()
    cls_all = _classes(all_e, pwr)
    in_J = np.isin(items, Jpos)
    cap = _class_cap(eps)
    labels = {}
    for q, s in enumerate(pwr):
        c = int(np.sum(in_J & (cls_all == q)))
        labels[int(s)] = c if c <= cap else -1
    return NormLinGuess(j1, j2, R, labels)
