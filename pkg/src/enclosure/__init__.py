"""Heat-conductor cavity detection from wave-probe boundary fluxes.

The probe is a closed-form spherical wave, the heat equation is solved by
Legendre modes on the shell, and the indicator built from both Laplace
transforms is swept in the Laplace parameter to read off distances.
"""

from .geometry import Ball, ProbeGeometry, REFERENCE_GEOMETRY, ModeBasis
from .wavefield import WaveField
from .asymptotics import LambdaSchedule, NumericsConfig, run_sweep, fit_rate, estimate_distance

__all__ = ["Ball", "ProbeGeometry", "REFERENCE_GEOMETRY", "ModeBasis", "WaveField",
           "LambdaSchedule", "NumericsConfig", "run_sweep", "fit_rate", "estimate_distance"]
