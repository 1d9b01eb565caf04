"""Electro-optic spatial-mode converters and a spatial-mode entangled photon source in KTP."""

from .chsh import (
    MeasurementSettings, analytic_planar_bound, chsh_value, coincidence_probabilities,
    correlation, optimize_settings,
)
from .coupler import CouplingDesign, transfer_matrix
from .electrode import ElectrodeConfig, ez_field
from .material import Material, default_material, refractive_index
from .modesolver import WaveguideGeometry, guided_modes
from .spdc import QpmSourceConfig, SourceModel, build_density_matrix, estimate_wv

__version__ = "0.1.0"

__all__ = [
    "CouplingDesign", "ElectrodeConfig", "Material", "MeasurementSettings", "QpmSourceConfig",
    "SourceModel", "WaveguideGeometry", "analytic_planar_bound", "build_density_matrix",
    "chsh_value", "coincidence_probabilities", "correlation", "default_material", "estimate_wv",
    "ez_field", "guided_modes", "optimize_settings", "refractive_index", "transfer_matrix",
]
