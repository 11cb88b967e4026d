"""Exception taxonomy and process exit codes.

Three families map onto CLI exit codes: configuration problems (2), physics
or numerics failures (3), and I/O failures (4). Library code raises these;
only the CLI translates them into exits.
"""


class ConfigError(Exception):
    """Bad configuration: unknown keys, missing sections, invalid values."""

    exit_code = 2


class PhysicsError(Exception):
    """A computation failed for a physical or numerical reason."""

    exit_code = 3


class IoError(Exception):
    """Artifact read/write failure."""

    exit_code = 4


class GridTooCoarse(ConfigError):
    """Grid spacing does not resolve a required feature."""


class GeometryOverlap(ConfigError):
    """Two electrodes claim the same grid cell."""


class MissingBoundaryValue(ConfigError):
    """An electrode present in the mask has no boundary voltage."""


class NotConverged(PhysicsError):
    """Iterative solve hit max iterations. Carries the best-effort result."""

    def __init__(self, message, field=None, report=None):
        super().__init__(message)
        self.field = field
        self.report = report


class NoInteriorMinimum(PhysicsError):
    """No interior local minimum exists on the axis."""


class SaddleNotMinimum(PhysicsError):
    """Curvature at the candidate point is not positive definite."""


class IonInsideElectrode(PhysicsError):
    """Requested emission point lies inside an electrode."""


class OverlappingIons(PhysicsError):
    """Two ions coincide; Coulomb energy undefined."""


class NoConvergence(PhysicsError):
    """All relaxation restarts failed to converge."""


class NoRaysReachPlane(PhysicsError):
    """Spot diagram requested on a plane no alive ray crosses."""


class TotalInternalReflection(PhysicsError):
    """Refraction discriminant negative at an interface."""


class BundleNotSingleValued(PhysicsError):
    """Ray bundle still crossing at the requested design plane."""


class SlopeUnmanufacturable(PhysicsError):
    """Designed surface slope exceeds the manufacturable bound."""


class EmptyProfile(PhysicsError):
    """Profile export requested before any samples exist."""
