"""GLB problem data: instances, assignments, objective evaluation, generators and file I/O.

Forbidden machine/job pairs are stored as ``inf`` in ``p`` and exposed through the
``allowed`` mask; solvers must consult the mask and never do arithmetic with them.
Indices are 0-based here and 1-based in files.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .norms import (
    L1,
    LINF,
    LpNorm,
    MaxOf,
    NormSpec,
    Ordered,
    Scaled,
    TopK,
    norm_from_dict,
)

__all__ = [
    "InstanceError",
    "Instance",
    "Assignment",
    "ScaledInstance",
    "machine_load",
    "loads",
    "objective",
    "gen_random",
    "gen_from_set_cover",
    "normalize",
    "load_instance",
    "save_instance",
    "instance_to_dict",
    "instance_from_dict",
    "NORM_PROFILES",
    "random_norm",
    "assignment_to_dict",
    "assignment_from_dict",
]


class InstanceError(ValueError):
    """Malformed instance data or an assignment that does not fit an instance."""


@dataclass(frozen=True, eq=False)
class Instance:
    p: np.ndarray
    inner_norms: tuple[NormSpec, ...]
    outer_norm: NormSpec

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise InstanceError("processing-time matrix must be m x n with m, n >= 1")
        if np.isnan(p).any():
            raise InstanceError("processing times may not be NaN")
        fin = np.isfinite(p)
        if (p[fin] <= 0).any():
            raise InstanceError("processing times must be positive")
        if (p == -np.inf).any():
            raise InstanceError("processing times must be positive")
        uncovered = np.flatnonzero(~fin.any(axis=0))
        if uncovered.size:
            raise InstanceError(f"uncoverable job(s) {[int(j) + 1 for j in uncovered]}: every machine forbidden")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "inner_norms", tuple(self.inner_norms))
        if len(self.inner_norms) != p.shape[0]:
            raise InstanceError("need one inner norm per machine")

    @property
    def m(self) -> int:
        return self.p.shape[0]

    @property
    def n(self) -> int:
        return self.p.shape[1]

    @property
    def allowed(self) -> np.ndarray:
        return np.isfinite(self.p)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.p.shape == other.p.shape
                and bool(np.array_equal(self.p, other.p))
                and self.inner_norms == other.inner_norms
                and self.outer_norm == other.outer_norm)

    def scaled(self, s: float) -> "Instance":
        return Instance(self.p * s, self.inner_norms, self.outer_norm)

    def psi(self, i: int, jobs) -> float:
        """Inner norm of machine ``i`` on the job subset ``jobs``."""
        jobs = list(jobs)
        if not self.allowed[i, jobs].all():
            raise InstanceError(f"forbidden pair in job set {jobs} on machine {i}")
        u = np.zeros(self.n)
        u[jobs] = self.p[i, jobs]
        return float(self.inner_norms[i].evaluate(u))


@dataclass(frozen=True)
class Assignment:
    sigma: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(int(i) for i in self.sigma))

    def jobs_on(self, i: int) -> list[int]:
        return [j for j, mi in enumerate(self.sigma) if mi == i]


def _check_assignment(inst: Instance, a: Assignment):
    if len(a.sigma) != inst.n:
        raise InstanceError(f"assignment covers {len(a.sigma)} jobs, instance has {inst.n}")
    for j, i in enumerate(a.sigma):
        if not 0 <= i < inst.m:
            raise InstanceError(f"job {j} mapped to unknown machine {i}")
        if not inst.allowed[i, j]:
            raise InstanceError(f"job {j} assigned to forbidden machine {i}")


def loads(inst: Instance, a: Assignment) -> np.ndarray:
    _check_assignment(inst, a)
    sigma = np.asarray(a.sigma)
    out = np.empty(inst.m)
    for i in range(inst.m):
        u = np.where(sigma == i, np.where(inst.allowed[i], inst.p[i], 0.0), 0.0)
        out[i] = inst.inner_norms[i].evaluate(u)
    return out


def machine_load(inst: Instance, a: Assignment, i: int) -> float:
    return float(loads(inst, a)[i])


def objective(inst: Instance, a: Assignment) -> float:
    """Generalized makespan: outer norm of the machine-load vector."""
    return float(inst.outer_norm.evaluate(loads(inst, a)))


@dataclass(frozen=True)
class ScaledInstance:
    base: Instance
    scale: float
    star_machine: int
    star_job: int

    @property
    def inst(self) -> Instance:
        return self._scaled

    def __post_init__(self):
        object.__setattr__(self, "_scaled", self.base.scaled(self.scale))


def normalize(inst: Instance, i_star: int, j_star: int) -> ScaledInstance:
    """Rescale so that machine ``i_star`` running job ``j_star`` alone has load 1/n."""
    if not inst.allowed[i_star, j_star]:
        raise InstanceError(f"pair ({i_star}, {j_star}) is forbidden")
    single = inst.psi(i_star, [j_star])
    s = 1.0 / (inst.n * single)
    return ScaledInstance(inst, s, i_star, j_star)


# -- generators -------------------------------------------------------------------

NORM_PROFILES = ("l1-linf", "l1-l1", "linf-l1", "l1-l2", "topk-linf", "mixed")


def random_norm(rng: np.random.Generator, dim: int) -> NormSpec:
    kind = rng.integers(0, 7)
    if kind == 0:
        return L1
    if kind == 1:
        return LINF
    if kind == 2:
        return LpNorm(float(rng.choice([1.5, 2.0, 3.0])))
    if kind == 3:
        return TopK(int(rng.integers(1, dim + 1)))
    if kind == 4:
        w = np.sort(rng.uniform(0.1, 1.0, size=int(rng.integers(1, dim + 1))))[::-1]
        return Ordered(tuple(float(x) for x in np.round(w, 3)))
    if kind == 5:
        return Scaled(float(rng.choice([0.5, 2.0])), TopK(int(rng.integers(1, dim + 1))))
    return MaxOf((Scaled(2.0, TopK(1)), TopK(min(3, dim))))


def _profile_norms(profile: str, rng: np.random.Generator, m: int, n: int):
    if profile == "l1-linf":
        return (L1,) * m, LINF
    if profile == "l1-l1":
        return (L1,) * m, L1
    if profile == "linf-l1":
        return (LINF,) * m, L1
    if profile == "l1-l2":
        return (L1,) * m, LpNorm(2.0)
    if profile == "topk-linf":
        return tuple(TopK(int(rng.integers(1, n + 1))) for _ in range(m)), LINF
    if profile == "mixed":
        return tuple(random_norm(rng, n) for _ in range(m)), random_norm(rng, m)
    raise InstanceError(f"unknown norm profile {profile!r}; choose from {NORM_PROFILES}")


def gen_random(m: int, n: int, seed: int, value_range: tuple[float, float] = (1.0, 10.0),
               forbidden_prob: float = 0.0, norm_profile: str = "l1-linf",
               integral: bool = False) -> Instance:
    """Random instance; rows are resampled until every job keeps an allowed machine."""
    if m < 1 or n < 1:
        raise InstanceError("m and n must be >= 1")
    if not 0 <= forbidden_prob < 1:
        raise InstanceError("forbidden_prob must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    lo, hi = value_range
    if integral:
        p = rng.integers(int(lo), int(hi) + 1, size=(m, n)).astype(float)
    else:
        p = np.round(rng.uniform(lo, hi, size=(m, n)), 3)
    if forbidden_prob > 0:
        for j in range(n):
            while True:
                mask = rng.random(m) < forbidden_prob
                if not mask.all():
                    break
            p[mask, j] = np.inf
    inner, outer = _profile_norms(norm_profile, rng, m, n)
    return Instance(p, inner, outer)


def gen_from_set_cover(sets: Sequence[Sequence[int]], n: int) -> Instance:
    """Set-cover reduction: one machine per set, unit sizes on members, L-inf inner, L1 outer.

    Elements are 0-based job indices.
    """
    if n < 1 or not sets:
        raise InstanceError("need n >= 1 and at least one set")
    p = np.full((len(sets), n), np.inf)
    for i, S in enumerate(sets):
        for j in S:
            if not 0 <= j < n:
                raise InstanceError(f"set {i} contains out-of-range element {j}")
            p[i, j] = 1.0
    missing = [j for j in range(n) if not np.isfinite(p[:, j]).any()]
    if missing:
        raise InstanceError(f"uncoverable element(s) {missing}")
    return Instance(p, (LINF,) * len(sets), L1)


# -- file I/O --------------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    p = [[None if not math.isfinite(v) else float(v) for v in row] for row in inst.p]
    return {
        "m": inst.m,
        "n": inst.n,
        "p": p,
        "inner_norms": [nm.to_dict() for nm in inst.inner_norms],
        "outer_norm": inst.outer_norm.to_dict(),
    }


def instance_from_dict(d: dict) -> Instance:
    try:
        m, n = int(d["m"]), int(d["n"])
        rows = d["p"]
        inner = [norm_from_dict(x) for x in d["inner_norms"]]
        outer = norm_from_dict(d["outer_norm"])
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"malformed instance: {exc}") from None
    if len(rows) != m or any(len(r) != n for r in rows):
        raise InstanceError(f"p must be {m} x {n}")
    p = np.empty((m, n))
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            if v is None:
                p[i, j] = np.inf
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InstanceError(f"p[{i + 1}][{j + 1}] is not a number")
            elif not math.isfinite(v) or v <= 0:
                raise InstanceError(f"p[{i + 1}][{j + 1}] = {v} must be a positive number")
            else:
                p[i, j] = v
    return Instance(p, tuple(inner), outer)


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n", encoding="utf-8")


def load_instance(path) -> Instance:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from None
    return instance_from_dict(d)


def assignment_to_dict(a: Assignment) -> dict:
    return {"sigma": [i + 1 for i in a.sigma]}


def assignment_from_dict(d: dict) -> Assignment:
    return Assignment(tuple(int(i) - 1 for i in d["sigma"]))
