"""Dense two-phase primal simplex with basic solutions, duals and Farkas certificates.

The LP is ``min c.x`` subject to rows ``A_i.x (<=|==|>=) b_i`` and box bounds
``lower <= x <= upper`` (lower finite, upper possibly infinite).

Sign conventions (shared by duals and certificates): a row multiplier ``y_i``
is >= 0 on ``<=`` rows, <= 0 on ``>=`` rows, free on ``==`` rows, so that
``y.A x <= y.b`` is implied by the rows.  An infeasibility certificate is
``(y, w)`` with ``w >= 0`` on finite upper bounds such that
``A^T y + w >= 0`` and ``y.(b - A l) + w.(u - l) < 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "TOL",
    "LinearProgram",
    "Optimal",
    "Infeasible",
    "Unbounded",
    "LpOutcome",
    "LpNumericalError",
    "solve",
    "solve_feasibility",
]


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    zero: float = 1e-9
    pivot: float = 1e-9


TOL = Tolerances()

LE, EQ, GE = "<=", "==", ">="
_SENSES = {LE: LE, EQ: EQ, GE: GE, "=": EQ, "<": LE, ">": GE}


class LpNumericalError(RuntimeError):
    """The simplex could not reach a trustworthy status."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        nvar = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, nvar)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.senses = tuple(_SENSES[s] for s in self.senses)
        self.lower = np.zeros(nvar) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(nvar, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        nrow = self.A.shape[0]
        if self.b.size != nrow or len(self.senses) != nrow:
            raise ValueError("row count mismatch between A, b and senses")
        if self.lower.shape != (nvar,) or self.upper.shape != (nvar,):
            raise ValueError("bound vectors must match the variable count")
        if not (np.isfinite(self.c).all() and np.isfinite(self.A).all() and np.isfinite(self.b).all()):
            raise ValueError("LP coefficients must be finite")
        if not np.isfinite(self.lower).all():
            raise ValueError("lower bounds must be finite")
        if (self.upper < self.lower).any():
            raise ValueError("upper bound below lower bound")

    @property
    def nvar(self) -> int:
        return self.c.size

    @property
    def nrow(self) -> int:
        return self.A.shape[0]

    def row_violation(self, x: np.ndarray) -> float:
        """Largest violation of any row or bound at ``x`` (0 when feasible)."""
        ax = self.A @ x
        viol = [0.0]
        for s, lhs, rhs in zip(self.senses, ax, self.b):
            if s == LE:
                viol.append(lhs - rhs)
            elif s == GE:
                viol.append(rhs - lhs)
            else:
                viol.append(abs(lhs - rhs))
        viol.append(float(np.max(self.lower - x, initial=0.0)))
        fin = np.isfinite(self.upper)
        viol.append(float(np.max(x[fin] - self.upper[fin], initial=0.0)))
        return float(max(viol))


@dataclass
class Optimal:
    x: np.ndarray
    objective: float
    duals: np.ndarray
    bound_duals: np.ndarray
    basic: np.ndarray
    iterations: int = 0
    status: str = field(default="optimal", init=False)


@dataclass
class Infeasible:
    certificate: np.ndarray
    bound_certificate: np.ndarray
    iterations: int = 0
    status: str = field(default="infeasible", init=False)


@dataclass
class Unbounded:
    iterations: int = 0
    status: str = field(default="unbounded", init=False)


LpOutcome = Optimal | Infeasible | Unbounded


class _Tableau:
    """Standard-form tableau ``M x = rhs, x >= 0`` with an explicit basis."""

    def __init__(self, lp: LinearProgram):
        n = lp.nvar
        shift_b = lp.b - lp.A @ lp.lower
        ub = lp.upper - lp.lower
        ub_idx = np.flatnonzero(np.isfinite(ub))

        rows = [lp.A[i] for i in range(lp.nrow)]
        senses = list(lp.senses)
        rhs = list(shift_b)
        for j in ub_idx:
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            senses.append(LE)
            rhs.append(ub[j])
        R = len(rows)
        self.n, self.R, self.nrow_orig = n, R, lp.nrow
        self.ub_idx = ub_idx

        flip = np.ones(R)
        for i in range(R):
            if rhs[i] < 0:
                flip[i] = -1.0
        nslack = sum(1 for s in senses if s != EQ)
        # artificials are needed wherever the slack cannot start basic
        need_art = [not (senses[i] == LE and flip[i] > 0) and not (senses[i] == GE and flip[i] < 0)
                    for i in range(R)]
        nart = sum(need_art)
        N = n + nslack + nart
        M = np.zeros((R, N))
        basis = np.empty(R, dtype=int)
        col = n
        slack_of = np.full(R, -1)
        for i in range(R):
            M[i, :n] = flip[i] * rows[i]
            if senses[i] != EQ:
                sign = 1.0 if senses[i] == LE else -1.0
                M[i, col] = flip[i] * sign
                slack_of[i] = col
                if not need_art[i]:
                    basis[i] = col
                col += 1
        art_start = col
        for i in range(R):
            if need_art[i]:
                M[i, col] = 1.0
                basis[i] = col
                col += 1
        self.M = M
        self.rhs0 = flip * np.asarray(rhs, dtype=float)
        self.flip = flip
        self.N = N
        self.art_start = art_start
        self.basis = basis
        self.T = np.hstack([M, self.rhs0[:, None]])
        self.iterations = 0

    # -- pivoting -------------------------------------------------------------
    def _pivot(self, r: int, c: int, cost_row: np.ndarray):
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        cost_row -= cost_row[c] * T[r]
        self.basis[r] = c
        self.iterations += 1

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        row = np.zeros(self.N + 1)
        row[: self.N] = cost
        for i, bv in enumerate(self.basis):
            if row[bv] != 0.0:
                row -= row[bv] * self.T[i]
        return row

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> str:
        """Minimise ``cost`` over the current basis; returns 'optimal' or 'unbounded'."""
        row = self._reduced_costs(cost)
        bland = False
        degenerate = 0
        tol = TOL.zero
        for _ in range(max_iter):
            d = np.where(allowed, row[: self.N], 0.0)
            if bland:
                cand = np.flatnonzero(d < -tol)
                if cand.size == 0:
                    return "optimal"
                c = int(cand[0])
            else:
                c = int(np.argmin(d))
                if d[c] >= -tol:
                    return "optimal"
            colv = self.T[:, c]
            pos = np.flatnonzero(colv > TOL.pivot)
            if pos.size == 0:
                return "unbounded"
            ratios = self.T[pos, -1] / colv[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(ties[np.argmin(self.basis[ties])])
            if best <= tol:
                degenerate += 1
                if degenerate > 2 * self.R + 10:
                    bland = True
            else:
                degenerate = 0
            self._pivot(r, c, row)
        raise LpNumericalError(f"simplex exceeded {max_iter} pivots")

    def drive_out_artificials(self):
        for i in range(self.R):
            if self.basis[i] >= self.art_start:
                cand = np.flatnonzero(np.abs(self.T[i, : self.art_start]) > 1e-7)
                if cand.size:
                    self._pivot(i, int(cand[0]), np.zeros(self.N + 1))

    # -- clean recomputation from the basis matrix ------------------------------
    def basic_solution(self) -> np.ndarray:
        B = self.M[:, self.basis]
        try:
            xb = np.linalg.solve(B, self.rhs0)
        except np.linalg.LinAlgError as exc:
            raise LpNumericalError("singular basis") from exc
        x = np.zeros(self.N)
        x[self.basis] = xb
        x[np.abs(x) < TOL.zero] = 0.0
        return x

    def multipliers(self, cost: np.ndarray) -> np.ndarray:
        B = self.M[:, self.basis]
        try:
            return np.linalg.solve(B.T, cost[self.basis])
        except np.linalg.LinAlgError as exc:
            raise LpNumericalError("singular basis") from exc


def _max_iter(tab: _Tableau) -> int:
    return 50 * (tab.R + tab.N) + 1000


def _phase1(lp: LinearProgram):
    tab = _Tableau(lp)
    cost1 = np.zeros(tab.N)
    cost1[tab.art_start:] = 1.0
    allowed = np.ones(tab.N, dtype=bool)
    if tab.N > tab.art_start:
        status = tab.run(cost1, allowed, _max_iter(tab))
        if status != "optimal":
            raise LpNumericalError("phase 1 reported unbounded")
    x = tab.basic_solution()
    infeas = float(x[tab.art_start:].sum())
    if infeas > TOL.feasibility:
        pi = tab.multipliers(cost1)
        y_std = -pi
        y = tab.flip * y_std
        cert = y[: tab.nrow_orig].copy()
        w = np.zeros(lp.nvar)
        w[tab.ub_idx] = np.maximum(y[tab.nrow_orig:], 0.0)
        for i, s in enumerate(lp.senses):
            if s == LE:
                cert[i] = max(cert[i], 0.0)
            elif s == GE:
                cert[i] = min(cert[i], 0.0)
        return tab, Infeasible(cert, w, tab.iterations)
    tab.drive_out_artificials()
    return tab, None


def _finish(lp: LinearProgram, tab: _Tableau, cost_std: np.ndarray) -> Optimal:
    xs = tab.basic_solution()
    if (xs < -TOL.feasibility).any():
        raise LpNumericalError("basic solution lost nonnegativity")
    xs = np.maximum(xs, 0.0)
    x = lp.lower + xs[: lp.nvar]
    fin = np.isfinite(lp.upper)
    x[fin] = np.minimum(x[fin], lp.upper[fin])
    if lp.row_violation(x) > TOL.feasibility:
        raise LpNumericalError(f"solution violates rows by {lp.row_violation(x):.3g}")
    pi = tab.flip * tab.multipliers(cost_std)
    duals = pi[: tab.nrow_orig].copy()
    bound_duals = np.zeros(lp.nvar)
    bound_duals[tab.ub_idx] = pi[tab.nrow_orig:]
    basic = np.zeros(lp.nvar, dtype=bool)
    sb = tab.basis[tab.basis < lp.nvar]
    basic[sb] = True
    return Optimal(x, float(lp.c @ x), duals, bound_duals, basic, tab.iterations)


def solve(lp: LinearProgram) -> LpOutcome:
    """Solve ``lp`` to a basic optimum, or return an infeasibility/unboundedness status."""
    tab, bad = _phase1(lp)
    if bad is not None:
        return bad
    cost = np.zeros(tab.N)
    cost[: lp.nvar] = lp.c
    allowed = np.zeros(tab.N, dtype=bool)
    allowed[: tab.art_start] = True
    status = tab.run(cost, allowed, _max_iter(tab))
    if status == "unbounded":
        return Unbounded(tab.iterations)
    return _finish(lp, tab, cost)


def solve_feasibility(lp: LinearProgram) -> Optimal | Infeasible:
    """Phase 1 only: a basic feasible point (objective reported as 0) or a Farkas certificate."""
    tab, bad = _phase1(lp)
    if bad is not None:
        return bad
    out = _finish(lp, tab, np.zeros(tab.N))
    out.objective = 0.0
    return out


def certificate_gap(lp: LinearProgram, cert: Infeasible) -> tuple[float, float]:
    """(min component of A^T y + w, value of y.(b - A l) + w.(u - l)) for a certificate.

    A valid certificate has the first value >= -1e-7 and the second < -1e-9.
    """
    y, w = cert.certificate, cert.bound_certificate
    lhs = lp.A.T @ y + w
    fin = np.isfinite(lp.upper)
    rhs = y @ (lp.b - lp.A @ lp.lower) + w[fin] @ (lp.upper[fin] - lp.lower[fin])
    return float(lhs.min(initial=0.0)), float(rhs)


def from_rows(c: Sequence[float], rows: Sequence[tuple[Sequence[float], str, float]],
              lower=None, upper=None) -> LinearProgram:
    """Convenience constructor from ``(coefficients, sense, rhs)`` triples."""
    c = np.asarray(c, dtype=float)
    if rows:
        A = np.array([r[0] for r in rows], dtype=float)
    else:
        A = np.zeros((0, c.size))
    return LinearProgram(c, A, tuple(r[1] for r in rows), [r[2] for r in rows], lower, upper)
