"""Symmetric monotone norms and the top-k identities built on them.

Every norm here acts on nonnegative vectors along the last axis, so a
``(batch, d)`` array is evaluated row by row in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "NormSpec",
    "LpNorm",
    "TopK",
    "Ordered",
    "Scaled",
    "MaxOf",
    "L1",
    "LINF",
    "eval_norm",
    "sorted_desc",
    "top_k",
    "top_k_threshold",
    "restrict",
    "majorization_ratio",
    "norm_from_dict",
]


def _desc(u: np.ndarray) -> np.ndarray:
    # entries sorted non-increasingly along the last axis
    return -np.sort(-u, axis=-1)


class NormSpec:
    """Base class for the closed family of symmetric monotone norms."""

    def evaluate(self, u: np.ndarray) -> np.ndarray | float:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def __call__(self, u) -> float:
        return eval_norm(self, u)


@dataclass(frozen=True)
class LpNorm(NormSpec):
    p: float

    def __post_init__(self):
        if not (self.p >= 1):
            raise ValueError(f"Lp norm needs p >= 1, got {self.p!r}")

    def evaluate(self, u):
        if self.p == 1:
            return u.sum(axis=-1)
        if math.isinf(self.p):
            return u.max(axis=-1, initial=0.0)
        return (u ** self.p).sum(axis=-1) ** (1.0 / self.p)

    def to_dict(self):
        if self.p == 1:
            return {"kind": "l1"}
        if math.isinf(self.p):
            return {"kind": "linf"}
        return {"kind": "lp", "p": self.p}


@dataclass(frozen=True)
class TopK(NormSpec):
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"TopK needs an integer k >= 1, got {self.k!r}")

    def evaluate(self, u):
        k = min(self.k, u.shape[-1])
        return _desc(u)[..., :k].sum(axis=-1)

    def to_dict(self):
        return {"kind": "topk", "k": int(self.k)}


@dataclass(frozen=True)
class Ordered(NormSpec):
    """Ordered (weighted-sorted) norm: sum_k w_k * u_desc[k]."""

    w: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        object.__setattr__(self, "w", w)
        if not w or any(x < 0 for x in w) or max(w) <= 0:
            raise ValueError("ordered weights must be nonnegative with one positive entry")
        if any(a < b for a, b in zip(w, w[1:])):
            raise ValueError("ordered weights must be non-increasing")

    def evaluate(self, u):
        d = u.shape[-1]
        w = np.zeros(d)
        q = min(d, len(self.w))
        w[:q] = self.w[:q]
        return _desc(u) @ w

    def to_dict(self):
        return {"kind": "ordered", "w": list(self.w)}


@dataclass(frozen=True)
class Scaled(NormSpec):
    c: float
    inner: NormSpec

    def __post_init__(self):
        if not (self.c > 0) or math.isinf(self.c):
            raise ValueError(f"scale factor must be finite and positive, got {self.c!r}")

    def evaluate(self, u):
        return self.c * self.inner.evaluate(u)

    def to_dict(self):
        return {"kind": "scaled", "c": self.c, "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class MaxOf(NormSpec):
    members: tuple[NormSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("MaxOf needs at least one member norm")

    def evaluate(self, u):
        vals = [np.asarray(m.evaluate(u), dtype=float) for m in self.members]
        return np.maximum.reduce(vals) if len(vals) > 1 else vals[0]

    def to_dict(self):
        return {"kind": "max", "members": [m.to_dict() for m in self.members]}


L1 = LpNorm(1)
LINF = LpNorm(math.inf)


def norm_from_dict(d: dict[str, Any]) -> NormSpec:
    """Inverse of ``NormSpec.to_dict``; raises ValueError on unknown shapes."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError(f"norm descriptor must be an object with a 'kind': {d!r}")
    kind = d["kind"]
    try:
        if kind == "l1":
            return L1
        if kind == "linf":
            return LINF
        if kind == "lp":
            p = d["p"]
            return LpNorm(math.inf if p in ("inf", "infinity") else float(p))
        if kind == "topk":
            return TopK(int(d["k"]))
        if kind == "ordered":
            return Ordered(tuple(d["w"]))
        if kind == "scaled":
            return Scaled(float(d["c"]), norm_from_dict(d["inner"]))
        if kind == "max":
            return MaxOf(tuple(norm_from_dict(x) for x in d["members"]))
    except KeyError as exc:
        raise ValueError(f"norm descriptor {kind!r} missing field {exc}") from None
    raise ValueError(f"unknown norm kind {kind!r}")


def _check_vector(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.isnan(u).any() or np.isinf(u).any():
        raise ValueError("norm input must be finite")
    if (u < 0).any():
        raise ValueError("norm input must be nonnegative")
    return u


def eval_norm(spec: NormSpec, u) -> float | np.ndarray:
    """Evaluate ``spec`` on a nonnegative vector (or on each row of a 2-D array)."""
    u = _check_vector(u)
    out = spec.evaluate(u)
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)


def sorted_desc(u) -> np.ndarray:
    """Non-increasing rearrangement; ties keep their original order."""
    u = np.asarray(u, dtype=float)
    return u[np.argsort(-u, kind="stable")]


def top_k(u, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    u = _check_vector(u)
    if u.size == 0:
        raise ValueError("top_k of an empty vector")
    return float(sorted_desc(u)[: min(k, u.size)].sum())


def top_k_threshold(u, k: int, t):
    """k*t + sum_j (u_j - t)^+; minimised over t >= 0 at t = k-th largest entry.

    ``t`` may be an array of thresholds, giving one value per threshold.
    """
    u = _check_vector(u)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return float(k * t + np.maximum(u - t, 0.0).sum())
    return k * t + np.maximum(u[None, :] - t.reshape(-1, 1), 0.0).sum(axis=1).reshape(t.shape)


def restrict(u, S: Iterable[int]) -> np.ndarray:
    """Copy of ``u`` with every entry outside the index set ``S`` zeroed."""
    u = np.asarray(u, dtype=float)
    idx = list(S)
    if any(i < 0 or i >= u.shape[-1] for i in idx):
        raise IndexError(f"index set {idx} out of range for dimension {u.shape[-1]}")
    out = np.zeros_like(u)
    out[..., idx] = u[..., idx]
    return out


def majorization_ratio(u: Sequence[float], v: Sequence[float]) -> float:
    """Smallest alpha with Top_k(u) <= alpha * Top_k(v) for every k.

    Returns ``math.inf`` when some prefix of ``v`` vanishes while ``u``'s does not.
    """
    u = _check_vector(u)
    v = _check_vector(v)
    if u.shape != v.shape:
        raise ValueError("majorization_ratio needs equal dimensions")
    cu = np.cumsum(sorted_desc(u))
    cv = np.cumsum(sorted_desc(v))
    if not cu.size or cu[-1] == 0:
        return 0.0
    alpha = 0.0
    for a, b in zip(cu, cv):
        if b == 0:
            if a > 0:
                return math.inf
            continue
        alpha = max(alpha, a / b)
    return float(alpha)
