"""Brute-force ground truth for GLB and NormLin at desk scale."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Assignment, Instance, objective
from .norms import NormSpec

__all__ = [
    "TooLargeError",
    "ExactCaps",
    "NormLinSolution",
    "SubsetTable",
    "solve_glb_exact",
    "solve_normlin_exact",
    "subset_bits",
]


class TooLargeError(RuntimeError):
    """Raised when an enumeration would exceed its configured work cap."""


@dataclass(frozen=True)
class ExactCaps:
    max_assignments: int = 10**7
    max_items: int = 22


_CHUNK = 1 << 15
_TIE = 1e-12


def _close_to_min(values: np.ndarray, best: float) -> np.ndarray:
    return values <= best + _TIE * max(1.0, abs(best))


def solve_glb_exact(inst: Instance, max_assignments: int = ExactCaps.max_assignments
                    ) -> tuple[Assignment, float]:
    """Optimal assignment by enumeration; ties go to the lexicographically smallest sigma."""
    choices = [np.flatnonzero(inst.allowed[:, j]) for j in range(inst.n)]
    radices = np.array([c.size for c in choices])
    total = 1
    for r in radices:
        total *= int(r)
        if total > max_assignments:
            raise TooLargeError("instance too large for exact oracle")
    # mixed radix with job 0 most significant reproduces lexicographic sigma order
    place = np.ones(inst.n, dtype=np.int64)
    for j in range(inst.n - 2, -1, -1):
        place[j] = place[j + 1] * radices[j + 1]
    p0 = np.where(inst.allowed, inst.p, 0.0)

    best_val, best_sigma = np.inf, None
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        digits = (idx[:, None] // place[None, :]) % radices[None, :]
        sigma = np.empty_like(digits)
        for j in range(inst.n):
            sigma[:, j] = choices[j][digits[:, j]]
        lds = np.empty((idx.size, inst.m))
        for i in range(inst.m):
            lds[:, i] = inst.inner_norms[i].evaluate(np.where(sigma == i, p0[i], 0.0))
        vals = np.asarray(inst.outer_norm.evaluate(lds), dtype=float)
        k = int(np.argmin(vals))
        cand = vals[k]
        if best_sigma is None or cand < best_val - _TIE * max(1.0, abs(best_val)):
            first = int(np.flatnonzero(_close_to_min(vals, cand))[0])
            best_val, best_sigma = vals[first], sigma[first].copy()
    a = Assignment(tuple(int(i) for i in best_sigma))
    return a, objective(inst, a)


def subset_bits(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Boolean membership matrix for bitmasks ``start..stop-1`` over ``n`` items."""
    stop = (1 << n) if stop is None else stop
    masks = np.arange(start, stop, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)


@dataclass(frozen=True)
class NormLinSolution:
    J: tuple[int, ...]
    cost: float


def _lex_best(bits: np.ndarray, rows: np.ndarray) -> int:
    """Among candidate rows pick smallest |J|, then lexicographically smallest sorted J."""
    sizes = bits[rows].sum(axis=1)
    rows = rows[sizes == sizes.min()]
    keyed = [(tuple(np.flatnonzero(bits[r])), r) for r in rows]
    return min(keyed)[1]


class SubsetTable:
    """All 2^n subsets of one weight vector with their norm costs, for repeated queries."""

    def __init__(self, p, psi: NormSpec, max_items: int = 16):
        p = np.asarray(p, dtype=float)
        if p.size > max_items:
            raise TooLargeError(f"{p.size} items exceed the subset-table cap {max_items}")
        self.n = p.size
        self.bits = subset_bits(self.n)
        self.cost = np.asarray(psi.evaluate(np.where(self.bits, p[None, :], 0.0)), dtype=float)
        self.masks = np.arange(1 << self.n, dtype=np.int64)

    def best(self, z, Z: float, within: np.ndarray | None = None) -> NormLinSolution | None:
        """Cheapest subset (of ``within``, a bool item mask) whose z-sum reaches ``Z``."""
        z = np.asarray(z, dtype=float)
        zsum = self.bits @ z
        ok = zsum >= Z - _TIE * max(1.0, abs(Z))
        if within is not None:
            outside = int(np.sum((~np.asarray(within, dtype=bool)) * (1 << np.arange(self.n))))
            ok &= (self.masks & outside) == 0
        rows = np.flatnonzero(ok)
        if rows.size == 0:
            return None
        c = self.cost[rows]
        tied = rows[_close_to_min(c, c.min())]
        r = _lex_best(self.bits, tied)
        return NormLinSolution(tuple(int(j) for j in np.flatnonzero(self.bits[r])), float(self.cost[r]))


def solve_normlin_exact(p, z, Z: float, psi: NormSpec, max_items: int = ExactCaps.max_items
                        ) -> NormLinSolution | None:
    """min psi(p<J>) subject to sum_{j in J} z_j >= Z; ``None`` when infeasible.

    Ties: smallest cost, then fewest items, then lexicographically smallest J.
    """
    p = np.asarray(p, dtype=float)
    z = np.asarray(z, dtype=float)
    if p.shape != z.shape or (p < 0).any() or (z < 0).any() or Z < 0:
        raise ValueError("NormLin needs nonnegative p, z of equal length and Z >= 0")
    n = p.size
    if n > max_items:
        raise TooLargeError("instance too large for exact oracle")
    if z.sum() < Z - _TIE * max(1.0, Z):
        return None
    best_cost, best = np.inf, None
    total = 1 << n
    for start in range(0, total, _CHUNK):
        bits = subset_bits(n, start, min(total, start + _CHUNK))
        zsum = bits @ z
        ok = np.flatnonzero(zsum >= Z - _TIE * max(1.0, Z))
        if ok.size == 0:
            continue
        cost = np.asarray(psi.evaluate(np.where(bits[ok], p[None, :], 0.0)), dtype=float)
        c = cost.min()
        if best is not None and c > best_cost + _TIE * max(1.0, best_cost):
            continue
        tied = ok[_close_to_min(cost, c)]
        r = _lex_best(bits, tied)
        cand = (tuple(int(j) for j in np.flatnonzero(bits[r])), float(psi.evaluate(np.where(bits[r], p, 0.0))))
        if best is None or c < best_cost - _TIE * max(1.0, best_cost):
            best_cost, best = c, cand
        else:
            # tie across chunks
            best = min(best, cand, key=lambda t: (len(t[0]), t[0]))
            best_cost = min(best_cost, c)
    return NormLinSolution(*best)
