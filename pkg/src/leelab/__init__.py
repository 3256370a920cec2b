"""Spectral laboratory for the renormalized nonrelativistic Lee model on compact manifolds."""
from .errors import (
    CapacityError,
    ConfigurationError,
    DomainError,
    LeeLabError,
    NumericalError,
    SearchFloorError,
    UnsupportedError,
)
from .fock import SectorBasis, enumerate_sector
from .groundstate import TwoSectorState, positivity_certificate, reconstruct
from .manifold import ManifoldSpec, heat_kernel, heat_kernel_diag, mode_table
from .principal import ModelParams, PrincipalOperator
from .solver import GroundEnergy, find_ground_energy, lowest_eigenpair

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ConfigurationError",
    "DomainError",
    "GroundEnergy",
    "LeeLabError",
    "ManifoldSpec",
    "ModelParams",
    "NumericalError",
    "PrincipalOperator",
    "SearchFloorError",
    "SectorBasis",
    "TwoSectorState",
    "UnsupportedError",
    "enumerate_sector",
    "find_ground_energy",
    "heat_kernel",
    "heat_kernel_diag",
    "lowest_eigenpair",
    "mode_table",
    "positivity_certificate",
    "reconstruct",
]
