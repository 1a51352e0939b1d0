"""Resonances of half-line discrete Schrodinger operators with truncated periodic potentials."""
from .periodic_model import PeriodicPotential, band_structure, classify_band_edge
from .tridiag_spectral import assemble, eigen_decompose, rescale
from .resonance_lab import LabParams, prepare_edge, verify_edge

__all__ = [
    "PeriodicPotential", "band_structure", "classify_band_edge", "assemble",
    "eigen_decompose", "rescale", "LabParams", "prepare_edge", "verify_edge",
]
__version__ = "0.1.0"
