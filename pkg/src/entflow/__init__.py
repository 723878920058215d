"""Entanglement spectra of the XY chain along renormalization-group flows."""

__version__ = "0.1.0"

from .model import CouplingPoint, flow_distance, validate  # noqa: E402
from .freefermion import QuadratureSpec, ModeOccupations, block_modes  # noqa: E402
from .spectra import (  # noqa: E402
    TruncatedSpectrum,
    MajorizationVerdict,
    block_entropy,
    renyi_entropy,
    top_k_product_spectrum,
    majorize,
    modewise_majorize,
)

__all__ = [
    "CouplingPoint",
    "flow_distance",
    "validate",
    "QuadratureSpec",
    "ModeOccupations",
    "block_modes",
    "TruncatedSpectrum",
    "MajorizationVerdict",
    "block_entropy",
    "renyi_entropy",
    "top_k_product_spectrum",
    "majorize",
    "modewise_majorize",
]
