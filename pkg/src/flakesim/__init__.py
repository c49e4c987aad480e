"""Physics-based synthetic microscopy of 2D-material flakes."""
from .materials import DEFAULT_GRID, DispersionTable, MaterialLibrary, SpectralCurve, SpectralGrid
from .optics import Layer, LayerStack, reflectance, reflectance_spectrum
from .colorimetry import ColorSystem, default_color_system
from .synthesis import SynthesisConfig, synthesize_scene

__version__ = "0.1.0"
