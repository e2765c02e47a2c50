"""Positive maps that are not completely positive, built from nonnegative
biforms that are not sums of squares, with certificates and an entanglement
detector."""
from .construct import ConstructionConfig, ConstructionResult, construct_pncp
from .errors import (
    DimensionMismatch,
    FinalFormIsSos,
    ModeMismatch,
    NoDeltaFound,
    PncpError,
    RationalizationError,
)
from .polyalg import Biform, BilinearForm, PncpMap, biform_to_map, map_to_biform
from .quantum import DensityMatrix, detect_entanglement, ppt_check
from .relax import find_delta, is_sos, verify_certificate

__version__ = "0.1.0"

__all__ = [
    "Biform",
    "BilinearForm",
    "ConstructionConfig",
    "ConstructionResult",
    "DensityMatrix",
    "DimensionMismatch",
    "FinalFormIsSos",
    "ModeMismatch",
    "NoDeltaFound",
    "PncpError",
    "PncpMap",
    "RationalizationError",
    "biform_to_map",
    "construct_pncp",
    "detect_entanglement",
    "find_delta",
    "is_sos",
    "map_to_biform",
    "ppt_check",
    "verify_certificate",
]
