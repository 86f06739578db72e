"""Collapse-model dynamics of neutral kaons along three cross-checking paths."""
from .core import (Flavor, HeavisideConvention, MassState, PhysicalParams, ThetaPolynomial,
                   THETA_HALF, THETA_ONE, THETA_ZERO, to_mass_basis)

__all__ = [
    "Flavor", "HeavisideConvention", "MassState", "PhysicalParams", "ThetaPolynomial",
    "THETA_HALF", "THETA_ONE", "THETA_ZERO", "to_mass_basis",
]
__version__ = "0.1.0"
