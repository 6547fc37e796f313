"""Simulation and numerics for the weighted random connection model with a
preferential-attachment kernel."""

__version__ = "0.1.0"

from .connection import ConnectionSpec, Profile
from .scaling import ScalingSolution, evaluate_L, solve_scg
from .weights import Family, WeightLaw

__all__ = [
    "ConnectionSpec",
    "Profile",
    "ScalingSolution",
    "evaluate_L",
    "solve_scg",
    "Family",
    "WeightLaw",
    "__version__",
]
