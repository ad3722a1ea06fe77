"""Convex relaxations of stationary and time-dependent Fokker-Planck equations.

The package computes low-order cluster moments and grid marginals of
equilibrium and evolving densities of overdamped Langevin dynamics by
assembling moment / marginal relaxations and solving them through a
solver-agnostic conic layer, validated against independent oracles.
"""

__version__ = "0.1.0"

from . import bases, conic, marginal_relax, maxent, moment_relax, oracles
from . import potentials, timedep

__all__ = [
    "bases",
    "potentials",
    "conic",
    "oracles",
    "moment_relax",
    "marginal_relax",
    "timedep",
    "maxent",
    "__version__",
]
