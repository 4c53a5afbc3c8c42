"""Generalized load balancing with symmetric monotone norms.

Modules: ``norms`` (norm family and top-k identities), ``instance`` (data,
objective, generators, files), ``lpcore`` (simplex with certificates),
``exact`` (brute-force oracles), ``normlin`` (NormLin approximation scheme),
``oracle`` (dual separation), ``glb`` (configuration-LP rounding),
``maxtopk`` (Top-k / L_inf rounding) and ``cli``.
"""
from .instance import Assignment, Instance, InstanceError, gen_from_set_cover, gen_random, objective
from .norms import L1, LINF, LpNorm, MaxOf, NormSpec, Ordered, Scaled, TopK

__all__ = [
    "Assignment",
    "Instance",
    "InstanceError",
    "gen_from_set_cover",
    "gen_random",
    "objective",
    "NormSpec",
    "LpNorm",
    "TopK",
    "Ordered",
    "Scaled",
    "MaxOf",
    "L1",
    "LINF",
]

__version__ = "0.1.0"
