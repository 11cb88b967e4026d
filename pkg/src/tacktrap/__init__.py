"""Simulation and design toolkit for a mirror-and-needle RF ion trap.

A concave spherical RF mirror electrode, pierced on axis by a grounded
needle, both traps an ion in the ponderomotive pseudopotential and collects
a large solid angle of its fluorescence. This package covers the full chain:
electrostatics on an axisymmetric grid, pseudopotential observables, Coulomb
crystal equilibria, sequential ray tracing of the collection optics, aspheric
corrector synthesis, and photon-budget accounting.
"""

__version__ = "0.1.0"

from .collect import (
    EmissionModel,
    dipole_cap_fraction,
    na_equivalent,
    photon_budget,
    solid_angle,
)
from .corrector import CorrectorDesignSpec, design, verify
from .crystal import GriddedTrap, HarmonicTrap, relax
from .errors import ConfigError, IoError, PhysicsError
from .field import ScalarField2D, solve_laplace
from .geometry import (
    GridSpec,
    MirrorSpec,
    NeedleSpec,
    PlateSpec,
    RingSpec,
    TrapGeometry,
    rasterize,
)
from .pseudo import (
    IonSpecies,
    RfDrive,
    analyze_trap,
    find_minimum,
    needle_scan,
    pseudopotential,
    secular_frequencies,
    trap_depth,
)
from .rays import RayBundle, SurfaceStack, best_focus, emit_bundle, spot

__all__ = [
    "__version__",
    "ConfigError",
    "PhysicsError",
    "IoError",
    "MirrorSpec",
    "NeedleSpec",
    "RingSpec",
    "PlateSpec",
    "TrapGeometry",
    "GridSpec",
    "rasterize",
    "ScalarField2D",
    "solve_laplace",
    "RfDrive",
    "IonSpecies",
    "pseudopotential",
    "find_minimum",
    "trap_depth",
    "secular_frequencies",
    "analyze_trap",
    "needle_scan",
    "HarmonicTrap",
    "GriddedTrap",
    "relax",
    "RayBundle",
    "SurfaceStack",
    "emit_bundle",
    "spot",
    "best_focus",
    "CorrectorDesignSpec",
    "design",
    "verify",
    "EmissionModel",
    "solid_angle",
    "dipole_cap_fraction",
    "na_equivalent",
    "photon_budget",
]
