"""Geometric index sets and guessed threshold vectors.

A guess assigns a value to each index of a sparse set ``POS`` of positions in
``[1, size]``.  Its expansion carries each value forward to the following
non-``POS`` positions, and the round-up function ``h`` snaps a value to the
smallest guessed entry at least as large.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["Pos", "build_pos2", "build_pos_iterative", "GuessR", "ceil_log", "exceeds"]

# relative slack when comparing a value with a guessed power
H_RTOL = 1e-12
# relative slack for the cost-cap test psi > tau, so float noise at psi == tau is not "over"
OVER_RTOL = 1e-9


def exceeds(psi, tau: float):
    return np.asarray(psi) > tau * (1 + OVER_RTOL)


@dataclass(frozen=True)
class Pos:
    indices: tuple[int, ...]
    size: int

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)

    def __contains__(self, k):
        return k in self.indices

    def next(self, k: int) -> int:
        i = bisect.bisect_right(self.indices, k)
        return self.indices[i] if i < len(self.indices) else self.size + 1

    def prev(self, k: int) -> int:
        i = bisect.bisect_left(self.indices, k)
        return self.indices[i - 1] if i > 0 else 0


def build_pos2(m: int) -> Pos:
    """{min(2^s, m) : s >= 0}."""
    if m < 1:
        raise ValueError("m must be >= 1")
    out, s = [], 1
    while s < m:
        out.append(s)
        s *= 2
    out.append(m)
    return Pos(tuple(out), m)


def build_pos_iterative(n: int, eps: float) -> Pos:
    """Start from {1}; append min(n, ceil((1+eps) * last)) until n is present."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    out = [1]
    while out[-1] != n:
        out.append(min(n, math.ceil((1 + eps) * out[-1] - 1e-12)))
    return Pos(tuple(out), n)


def ceil_log(x: float, base: float) -> int:
    """ceil(log_base x) with a guard against floating off-by-one at exact powers."""
    if x <= 0:
        raise ValueError("ceil_log needs x > 0")
    if base == 2:
        mant, e = math.frexp(x)
        return e - 1 if mant == 0.5 else e
    v = math.log(x) / math.log(base)
    c = math.ceil(v - 1e-12)
    # nudge to the true ceiling by direct comparison with the power
    while base ** c < x * (1 - 1e-12):
        c += 1
    while c - 1 >= v - 1 and base ** (c - 1) >= x * (1 - 1e-12):
        c -= 1
    return c


@dataclass(frozen=True)
class GuessR:
    """Non-increasing vector of powers ``base**exps[k]`` indexed by ``POS``.

    ``saturate`` selects the round-up rule: with it, values in (max R, 1]
    round to 1 (the load-balancing variant); without it they stay put.
    """

    pos: Pos
    exps: tuple[int, ...]
    base: float = 2.0
    saturate: bool = True

    def __post_init__(self):
        if len(self.exps) != len(self.pos):
            raise ValueError("one exponent per POS index")
        if any(a < b for a, b in zip(self.exps, self.exps[1:])):
            raise ValueError("guessed vector must be non-increasing")

    @cached_property
    def rho(self) -> np.ndarray:
        return np.array([self.base ** e for e in self.exps], dtype=float)

    @cached_property
    def values(self) -> np.ndarray:
        """Distinct guessed values, ascending."""
        return np.unique(self.rho)

    def distinct(self) -> int:
        return len(set(self.exps))

    @cached_property
    def varrho(self) -> np.ndarray:
        out = np.empty(self.pos.size)
        idx = self.pos.indices
        for t, k in enumerate(idx):
            stop = idx[t + 1] if t + 1 < len(idx) else self.pos.size + 1
            out[k - 1: stop - 1] = self.rho[t]
        return out

    @cached_property
    def top_varrho(self) -> np.ndarray:
        """Top_k of the expansion for k = 1..size (index k-1)."""
        return np.cumsum(self.varrho)

    def slack(self) -> np.ndarray:
        """Top_k(varrho) - k*rho_k for each k in POS."""
        ks = np.array(self.pos.indices)
        return self.top_varrho[ks - 1] - ks * self.rho

    def h(self, x):
        """Round-up function; accepts scalars or arrays."""
        x = np.asarray(x, dtype=float)
        vals = self.values
        top = vals[-1]
        idx = np.searchsorted(vals, x * (1 - H_RTOL), side="left")
        snapped = vals[np.minimum(idx, vals.size - 1)]
        above = idx >= vals.size
        if self.saturate:
            out = np.where(above, np.where(x <= 1 + H_RTOL, 1.0, x), snapped)
            out = np.where(x <= top * (1 + H_RTOL), snapped, out)
        else:
            out = np.where(above, x, snapped)
        return float(out) if out.ndim == 0 else out
