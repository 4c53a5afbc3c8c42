"""Approximate separation over the dual polytope Q(R, lambda, tau).

A dual point (r, s, t, y, z) lies in Q when it satisfies the normalization

    -sum_k (Top_k(varrho) - k rho_k) r_k - sum_i y_i + lambda sum_j z_j - n t >= 1

and, for every configuration (i, J), the column constraint

    -y_i <= s [psi_i(J) > tau] + t + sum_k (h(psi_i(J)/tau) - rho_k)^+ r_k - sum_{j in J} z_j.

``separate`` looks for a violated column of Q(R, 1/2, 3/2) by solving NormLin
subproblems over value thresholds; when none is found the point with z halved
is certified to lie in Q(R, 1, 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exact import NormLinSolution, SubsetTable, TooLargeError, subset_bits
from .guesses import GuessR, exceeds
from .instance import Instance, InstanceError
from .norms import NormSpec

__all__ = [
    "DualPoint",
    "ViolatedNormalization",
    "ViolatedColumn",
    "Certified",
    "normalization_value",
    "check_normalization",
    "column_rhs",
    "separate",
    "verify_certificate_small",
    "ExactStrategy",
    "PtasStrategy",
    "make_strategy",
    "VIOLATION_TOL",
]

VIOLATION_TOL = 1e-9


@dataclass(frozen=True)
class DualPoint:
    r: np.ndarray
    s: float
    t: float
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("r", "y", "z"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "t", float(self.t))
        if min(self.r.min(initial=0), self.y.min(initial=0), self.z.min(initial=0), self.s, self.t) < 0:
            raise ValueError("dual point entries must be nonnegative")

    def scaled(self, c: float) -> "DualPoint":
        return DualPoint(self.r * c, self.s * c, self.t * c, self.y * c, self.z * c)

    def halve_z(self) -> "DualPoint":
        return DualPoint(self.r, self.s, self.t, self.y, self.z / 2)


@dataclass(frozen=True)
class ViolatedNormalization:
    value: float


@dataclass(frozen=True)
class ViolatedColumn:
    i: int
    J: tuple[int, ...]
    margin: float


@dataclass(frozen=True)
class Certified:
    point: DualPoint


def normalization_value(dp: DualPoint, R: GuessR, lam: float) -> float:
    n = dp.z.size
    return float(-(R.slack() @ dp.r) - dp.y.sum() + lam * dp.z.sum() - n * dp.t)


def check_normalization(dp: DualPoint, R: GuessR, lam: float):
    """``None`` when the normalization holds (within 1e-9), else the violation."""
    v = normalization_value(dp, R, lam)
    return None if v >= 1 - VIOLATION_TOL else ViolatedNormalization(v)


def _rhs(dp: DualPoint, R: GuessR, psi_val: float, zsum: float, tau: float) -> float:
    hv = R.h(psi_val / tau)
    over = dp.s if exceeds(psi_val, tau) else 0.0
    return over + dp.t + float(np.maximum(hv - R.rho, 0.0) @ dp.r) - zsum


def column_rhs(dp: DualPoint, R: GuessR, inst: Instance, i: int, J, lam: float, tau: float) -> float:
    """Right-hand side of the column constraint of (i, J); violated iff below -y_i - 1e-9.

    ``lam`` does not enter a column constraint; it is accepted for symmetry
    with the normalization.
    """
    J = tuple(int(j) for j in J)
    if J and not inst.allowed[i, list(J)].all():
        raise InstanceError(f"forbidden pair in job set {J} on machine {i}")
    psi_val = inst.psi(i, J) if J else 0.0
    return _rhs(dp, R, psi_val, float(dp.z[list(J)].sum()) if J else 0.0, tau)


# -- NormLin strategies --------------------------------------------------------

NormLinFn = Callable[[np.ndarray, np.ndarray, float, NormSpec, np.ndarray], "NormLinSolution | None"]


class ExactStrategy:
    """Exact NormLin by subset tables, cached per (weights, norm)."""

    name = "exact"

    def __init__(self, max_items: int = 16):
        self.max_items = max_items
        self._tables: dict = {}

    def __call__(self, p, z, Z, psi, within):
        key = (p.tobytes(), psi)
        tab = self._tables.get(key)
        if tab is None:
            tab = self._tables[key] = SubsetTable(p, psi, self.max_items)
        return tab.best(z, Z, within)


class PtasStrategy:
    """NormLin through the approximation scheme (weaker guarantee than the exact table)."""

    def __init__(self, eps: float, max_guesses: int | None = None):
        self.eps = eps
        self.max_guesses = max_guesses
        self.name = f"ptas({eps})"

    def __call__(self, p, z, Z, psi, within):
        from .normlin import NormLinInstance, solve_ptas

        idx = np.flatnonzero(within)
        if idx.size == 0:
            return NormLinSolution((), 0.0) if Z <= 0 else None
        res = solve_ptas(NormLinInstance(p[idx], z[idx], Z, psi, self.eps), self.max_guesses)
        if res.J is None:
            return None
        return NormLinSolution(tuple(int(idx[j]) for j in res.J), res.cost)


def make_strategy(spec: str):
    """``"exact"`` or ``"ptas(<eps>)"``."""
    if spec == "exact":
        return ExactStrategy()
    if spec.startswith("ptas(") and spec.endswith(")"):
        return PtasStrategy(float(spec[5:-1]))
    raise ValueError(f"unknown NormLin strategy {spec!r}")


def separate(dp: DualPoint, inst: Instance, R: GuessR, strategy=None,
             lam: float = 0.5, tau: float = 1.5):
    """Find a violated constraint of Q(R, lam, tau), or certify (r, s, t, y, z/2).

    Columns are probed machine by machine, anchor job by anchor job (in
    index order) and value threshold by threshold; the first violation wins.
    """
    strategy = strategy if strategy is not None else ExactStrategy()
    bad = check_normalization(dp, R, lam)
    if bad is not None:
        return bad
    n = inst.n
    steps = max(0, (n - 1).bit_length())     # smallest s with 2^s >= n
    seen: set[tuple[int, tuple[int, ...]]] = set()
    for i in range(inst.m):
        items = np.flatnonzero(inst.allowed[i])
        limit = -dp.y[i] - VIOLATION_TOL
        key = (i, ())
        seen.add(key)
        rhs = _rhs(dp, R, 0.0, 0.0, tau)
        if rhs < limit:
            return ViolatedColumn(i, (), float(-dp.y[i] - rhs))
        p_loc = inst.p[i, items]
        z_loc = dp.z[items]
        psi = inst.inner_norms[i]
        for a in range(items.size):
            za = z_loc[a]
            if za <= 0:
                continue
            within = z_loc <= za
            for q in range(steps + 1):
                sol = strategy(p_loc, z_loc, za * 2 ** q, psi, within)
                if sol is None:
                    break
                J = tuple(int(items[j]) for j in sol.J)
                if (i, J) in seen:
                    continue
                seen.add((i, J))
                rhs = column_rhs(dp, R, inst, i, J, lam, tau)
                if rhs < limit:
                    return ViolatedColumn(i, J, float(-dp.y[i] - rhs))
    return Certified(dp.halve_z())


def verify_certificate_small(dp: DualPoint, inst: Instance, R: GuessR,
                             check_norm: bool = True, max_items: int = 14, tol: float = 1e-7) -> bool:
    """Exhaustive membership test for Q(R, 1, 1) over every (i, J), J possibly empty."""
    if inst.n > max_items:
        raise TooLargeError("too many jobs for exhaustive certificate check")
    if check_norm and normalization_value(dp, R, 1.0) < 1 - tol:
        return False
    bits = subset_bits(inst.n)
    zsum = bits @ dp.z
    for i in range(inst.m):
        forbidden = ~inst.allowed[i]
        ok_rows = ~(bits & forbidden[None, :]).any(axis=1)
        u = np.where(bits[ok_rows], np.where(inst.allowed[i], inst.p[i], 0.0)[None, :], 0.0)
        psi_vals = np.asarray(inst.inner_norms[i].evaluate(u), dtype=float)
        hv = np.asarray(R.h(psi_vals), dtype=float).reshape(-1)
        over = np.where(exceeds(psi_vals, 1.0), dp.s, 0.0)
        rhs = over + dp.t + np.maximum(hv[:, None] - R.rho[None, :], 0.0) @ dp.r - zsum[ok_rows]
        if (rhs < -dp.y[i] - tol).any():
            return False
    return True
