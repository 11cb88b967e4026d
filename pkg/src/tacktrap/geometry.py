"""Axisymmetric trap geometry: electrode specs, conic surfaces, rasterization.

Lengths are millimeters throughout this module, angles degrees in specs and
radians internally. The coordinate system is cylindrical (r, z) with the
mirror vertex at the origin and +z the optical axis pointing out of the bowl.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, GeometryOverlap, GridTooCoarse

ROLE_RF = "rf"
ROLE_GROUND = "ground"
ROLE_DC = "dc"
_VALID_ROLES = (ROLE_RF, ROLE_GROUND, ROLE_DC)


def conic_sag(r, curvature, conic_constant):
    """Sag z(r) = c r^2 / (1 + sqrt(1 - (1+k) c^2 r^2)) measured from the vertex."""
    r = np.asarray(r, dtype=float)
    c = curvature
    k = conic_constant
    disc = 1.0 - (1.0 + k) * (c * r) ** 2
    if np.any(disc < -1e-12):
        raise ConfigError("conic sag undefined inside the requested aperture")
    return c * r * r / (1.0 + np.sqrt(np.maximum(disc, 0.0)))


def conic_sag_slope(r, curvature, conic_constant):
    """dz/dr of the conic sag."""
    r = np.asarray(r, dtype=float)
    c = curvature
    k = conic_constant
    return c * r / np.sqrt(np.maximum(1.0 - (1.0 + k) * (c * r) ** 2, 1e-300))


@dataclass(frozen=True)
class ConicSurface:
    """Shape of a conic optical surface; orientation handled by the tracer.

    kind is "mirror" or "refracting"; for refracting surfaces n_before /
    n_after are the indices on the incoming (-z) and outgoing (+z) sides.
    """

    vertex_z: float
    curvature: float
    conic_constant: float = 0.0
    r_min: float = 0.0
    r_max: float = np.inf
    kind: str = "mirror"
    n_before: float = 1.0
    n_after: float = 1.0

    def __post_init__(self):
        if not self.r_min < self.r_max:
            raise ConfigError("conic aperture requires r_min < r_max")
        if self.kind not in ("mirror", "refracting"):
            raise ConfigError(f"unknown surface kind {self.kind!r}")
        if min(self.n_before, self.n_after) <= 0:
            raise ConfigError("refractive indices must be positive")

    def sag(self, r):
        return self.vertex_z + conic_sag(r, self.curvature, self.conic_constant)

    def sag_slope(self, r):
        return conic_sag_slope(r, self.curvature, self.conic_constant)


@dataclass(frozen=True)
class MirrorSpec:
    """Concave conic mirror pierced by an axial vertex hole."""

    radius_of_curvature: float = 4.0   # vertex radius, mm
    aperture_radius: float = 3.0       # mm
    hole_radius: float = 0.375         # mm
    conic_constant: float = 0.0

    def __post_init__(self):
        if self.radius_of_curvature <= 0:
            raise ConfigError("mirror radius_of_curvature must be positive")
        if not 0.0 <= self.hole_radius < self.aperture_radius:
            raise ConfigError("mirror requires 0 <= hole_radius < aperture_radius")
        # sag must exist out to the aperture edge
        conic_sag(self.aperture_radius, self.curvature, self.conic_constant)

    @property
    def curvature(self):
        return 1.0 / self.radius_of_curvature

    @property
    def focal_z(self):
        return self.radius_of_curvature / 2.0

    def sag(self, r):
        return conic_sag(r, self.curvature, self.conic_constant)

    @property
    def cap_height(self):
        return float(self.sag(self.aperture_radius))

    def surface(self) -> ConicSurface:
        return ConicSurface(
            vertex_z=0.0,
            curvature=self.curvature,
            conic_constant=self.conic_constant,
            r_min=self.hole_radius,
            r_max=self.aperture_radius,
            kind="mirror",
        )


@dataclass(frozen=True)
class NeedleSpec:
    """Grounded axial needle: cylindrical shaft ending in a cone at tip_z."""

    shaft_radius: float = 0.25            # mm
    taper_half_angle_deg: float = 30.0
    tip_z: float = 0.5                    # mm
    travel_range: tuple = (0.5, 2.1)      # mm, allowed tip_z interval

    def __post_init__(self):
        if self.shaft_radius <= 0:
            raise ConfigError("needle shaft_radius must be positive")
        if not 0.0 < self.taper_half_angle_deg < 90.0:
            raise ConfigError("needle taper half-angle must be in (0, 90) deg")
        lo, hi = self.travel_range
        if not hi > lo:
            raise ConfigError("needle travel_range must have positive span")

    @property
    def taper_half_angle(self):
        return np.radians(self.taper_half_angle_deg)

    @property
    def cone_base_z(self):
        """z where the cone meets the full shaft radius."""
        return self.tip_z - self.shaft_radius / np.tan(self.taper_half_angle)

    def silhouette_radius(self, z):
        """Needle outline radius at height z (0 above the tip)."""
        z = np.asarray(z, dtype=float)
        r = np.where(
            z > self.tip_z,
            0.0,
            np.where(
                z > self.cone_base_z,
                (self.tip_z - z) * np.tan(self.taper_half_angle),
                self.shaft_radius,
            ),
        )
        return r

    def at_tip(self, tip_z) -> "NeedleSpec":
        lo, hi = self.travel_range
        if not lo - 1e-9 <= tip_z <= hi + 1e-9:
            raise ConfigError(
                f"tip_z {tip_z} outside travel_range ({lo}, {hi})"
            )
        return NeedleSpec(
            self.shaft_radius, self.taper_half_angle_deg, tip_z, self.travel_range
        )


@dataclass(frozen=True)
class RingSpec:
    """Washer electrode above the mirror rim."""

    inner_radius: float = 3.4
    outer_radius: float = 6.0
    center_z: float = 1.7
    thickness: float = 1.0

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ConfigError("ring requires 0 < inner_radius < outer_radius")
        if self.thickness <= 0:
            raise ConfigError("ring thickness must be positive")


@dataclass(frozen=True)
class PlateSpec:
    """Top plate with a central aperture, closing the trap region above."""

    aperture_radius: float = 5.0
    center_z: float = 8.0
    thickness: float = 0.5

    def __post_init__(self):
        if self.aperture_radius <= 0 or self.thickness <= 0:
            raise ConfigError("plate aperture_radius and thickness must be positive")


@dataclass(frozen=True)
class MirrorSegment:
    """One z-band of a segmented mirror surface with its own electrical role."""

    z_min: float
    z_max: float
    role: str = ROLE_RF
    bias: float = 0.0

    def __post_init__(self):
        if not self.z_max > self.z_min:
            raise ConfigError("segment requires z_max > z_min")
        if self.role not in _VALID_ROLES:
            raise ConfigError(f"segment role must be one of {_VALID_ROLES}")


@dataclass(frozen=True)
class TrapGeometry:
    """Full electrode set. Needle, ring and plate are optional.

    roles maps electrode name -> rf | ground | dc; dc_biases gives volts for
    dc electrodes. When mirror_segments is set the mirror is split into
    per-band electrodes named mirror_seg_<i> whose roles come from the
    segment entries, and the top-level mirror role is ignored.
    """

    mirror: MirrorSpec = MirrorSpec()
    needle: Optional[NeedleSpec] = NeedleSpec()
    ring: Optional[RingSpec] = RingSpec()
    plate: Optional[PlateSpec] = PlateSpec()
    chamber_radius: float = 12.0
    roles: dict = field(
        default_factory=lambda: {
            "mirror": ROLE_RF,
            "needle": ROLE_GROUND,
            "ring": ROLE_GROUND,
            "plate": ROLE_GROUND,
        }
    )
    dc_biases: dict = field(default_factory=dict)
    mirror_segments: Optional[tuple] = None

    def __post_init__(self):
        for name, role in self.roles.items():
            if role not in _VALID_ROLES:
                raise ConfigError(f"role {role!r} for {name!r} invalid")
        if self.needle is not None:
            if self.needle.shaft_radius >= self.mirror.hole_radius:
                raise ConfigError("needle shaft must be thinner than the vertex hole")
        for name in ("mirror", "ring", "plate"):
            obj = getattr(self, name)
            if obj is None:
                continue
            outer = {
                "mirror": self.mirror.aperture_radius,
                "ring": self.ring.outer_radius if self.ring else 0.0,
                "plate": self.chamber_radius,
            }[name]
            if outer > self.chamber_radius + 1e-9:
                raise ConfigError(f"{name} extends beyond chamber_radius")
        if self.mirror_segments is not None:
            segs = tuple(self.mirror_segments)
            if not segs:
                raise ConfigError("mirror_segments must be non-empty when given")
            for a, b in zip(segs, segs[1:]):
                if abs(a.z_max - b.z_min) > 1e-9:
                    raise ConfigError("mirror segments must be contiguous in z")
            if segs[-1].z_max < self.mirror.cap_height - 1e-9:
                raise ConfigError("mirror segments must cover the cap height")
        # only one connected RF region unless segmented
        if self.mirror_segments is None:
            rf = [n for n, r in self.roles.items() if r == ROLE_RF]
            if len(rf) > 1:
                raise ConfigError("multiple RF electrodes require mirror_segments")

    def electrode_names(self):
        names = []
        if self.mirror_segments is not None:
            names += [f"mirror_seg_{i}" for i in range(len(self.mirror_segments))]
        else:
            names.append("mirror")
        if self.needle is not None:
            names.append("needle")
        if self.ring is not None:
            names.append("ring")
        if self.plate is not None:
            names.append("plate")
        return names

    def role_of(self, name):
        if name.startswith("mirror_seg_"):
            seg = self.mirror_segments[int(name.rsplit("_", 1)[1])]
            return seg.role
        return self.roles.get(name, ROLE_GROUND)

    def bias_of(self, name):
        if name.startswith("mirror_seg_"):
            seg = self.mirror_segments[int(name.rsplit("_", 1)[1])]
            return seg.bias
        return self.dc_biases.get(name, 0.0)

    def with_tip(self, tip_z) -> "TrapGeometry":
        if self.needle is None:
            raise ConfigError("geometry has no needle to move")
        return TrapGeometry(
            mirror=self.mirror,
            needle=self.needle.at_tip(tip_z),
            ring=self.ring,
            plate=self.plate,
            chamber_radius=self.chamber_radius,
            roles=self.roles,
            dc_biases=self.dc_biases,
            mirror_segments=self.mirror_segments,
        )


@dataclass(frozen=True)
class GridSpec:
    """Uniform cylindrical solver grid; r in [0, r_max], z in [z_min, z_max]."""

    r_max: float = 12.0
    z_min: float = -1.0
    z_max: float = 10.0
    spacing: float = 0.010  # mm

    def __post_init__(self):
        if self.spacing <= 0:
            raise ConfigError("grid spacing must be positive")
        if not self.z_max > self.z_min or self.r_max <= 0:
            raise ConfigError("grid extents invalid")

    @property
    def nr(self):
        return int(round(self.r_max / self.spacing)) + 1

    @property
    def nz(self):
        return int(round((self.z_max - self.z_min) / self.spacing)) + 1

    @property
    def r(self):
        return np.arange(self.nr) * self.spacing

    @property
    def z(self):
        return self.z_min + np.arange(self.nz) * self.spacing


@dataclass
class ElectrodeMask:
    """Per-cell electrode ids on a grid. 0 = vacuum, i >= 1 = names[i-1]."""

    ids: np.ndarray           # (nr, nz) int16
    names: tuple
    grid: GridSpec

    def cells_of(self, name):
        return self.ids == (self.names.index(name) + 1)

    @property
    def electrode(self):
        return self.ids > 0


def rasterize(geometry: TrapGeometry, grid: GridSpec) -> ElectrodeMask:
    """Rasterize electrodes onto the grid; errors on overlap or coarse grids."""
    g = geometry
    if g.needle is not None:
        cells_across = 2.0 * g.needle.shaft_radius / grid.spacing
        if cells_across < 4.0:
            raise GridTooCoarse(
                f"needle shaft spans {cells_across:.1f} cells, need >= 4"
            )
    if g.mirror.aperture_radius > grid.r_max + 1e-9:
        raise ConfigError("grid does not cover the mirror aperture")
    if g.ring is not None and g.ring.outer_radius > grid.r_max + 1e-9:
        raise ConfigError("grid does not cover the ring electrode")

    r = grid.r
    z = grid.z
    RR, ZZ = np.meshgrid(r, z, indexing="ij")
    regions = {}

    mirror_body = (
        (RR >= g.mirror.hole_radius)
        & (RR <= g.mirror.aperture_radius)
        & (ZZ <= g.mirror.sag(np.minimum(RR, g.mirror.aperture_radius)))
    )
    if g.mirror_segments is not None:
        lo0 = g.mirror_segments[0].z_min
        hi_last = g.mirror_segments[-1].z_max
        zc = np.clip(ZZ, lo0, hi_last - 1e-12)
        for i, seg in enumerate(g.mirror_segments):
            hi = seg.z_max if i + 1 < len(g.mirror_segments) else hi_last + 1.0
            regions[f"mirror_seg_{i}"] = mirror_body & (zc >= seg.z_min) & (zc < hi)
    else:
        regions["mirror"] = mirror_body

    if g.needle is not None:
        n = g.needle
        shaft = (RR <= n.shaft_radius) & (ZZ <= n.cone_base_z)
        cone = (
            (ZZ > n.cone_base_z)
            & (ZZ <= n.tip_z)
            & (RR <= (n.tip_z - ZZ) * np.tan(n.taper_half_angle))
        )
        regions["needle"] = shaft | cone

    if g.ring is not None:
        regions["ring"] = (
            (RR >= g.ring.inner_radius)
            & (RR <= g.ring.outer_radius)
            & (np.abs(ZZ - g.ring.center_z) <= g.ring.thickness / 2.0)
        )

    if g.plate is not None:
        regions["plate"] = (
            (RR >= g.plate.aperture_radius)
            & (np.abs(ZZ - g.plate.center_z) <= g.plate.thickness / 2.0)
        )

    names = tuple(g.electrode_names())
    ids = np.zeros((grid.nr, grid.nz), dtype=np.int16)
    for idx, name in enumerate(names, start=1):
        region = regions[name]
        if not region.any():
            raise ConfigError(f"electrode {name!r} rasterizes to zero cells")
        clash = (ids > 0) & region
        if clash.any():
            other = names[int(ids[clash][0]) - 1]
            raise GeometryOverlap(f"electrodes {other!r} and {name!r} overlap")
        ids[region] = idx
    return ElectrodeMask(ids=ids, names=names, grid=grid)
