"""Stability, latent-geometry and sweep analyses of trained policies."""

from .latent import LatentGeometryReport, delta_geometry, latent_geometry
from .poincare import (APEX, CYCLE, PoincareAnalysis, Section, estimate_return_map,
                       finite_difference_jacobian)
from .sweeps import SweepResult, data_efficiency_sweep, robustness_sweep

__all__ = [
    "APEX", "CYCLE", "LatentGeometryReport", "PoincareAnalysis", "Section", "SweepResult",
    "data_efficiency_sweep", "delta_geometry", "estimate_return_map", "finite_difference_jacobian",
    "latent_geometry", "robustness_sweep",
]
