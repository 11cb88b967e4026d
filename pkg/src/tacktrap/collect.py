"""Solid-angle accounting and the photon collection budget.

Directions are classified by the polar angle theta measured from the straight
-down axis (into the bowl). For an on-axis ion the mirror annulus accepts the
band theta in (hole edge, rim edge); the needle, when present, shadows a
narrow cone around theta = 0 which only matters once it outgrows the hole
shadow. Lengths are millimeters here, matching the geometry module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IonInsideElectrode
from .geometry import MirrorSpec, NeedleSpec


@dataclass(frozen=True)
class EmissionModel:
    """isotropic, or dipole with sin^2 pattern about the given axis."""

    kind: str = "isotropic"
    axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("isotropic", "dipole"):
            raise ConfigError("emission kind must be isotropic or dipole")
        v = np.asarray(self.axis, dtype=float)
        if np.linalg.norm(v) == 0:
            raise ConfigError("dipole axis must be a nonzero vector")

    @property
    def axis_unit(self):
        v = np.asarray(self.axis, dtype=float)
        return v / np.linalg.norm(v)

    @property
    def axis_polar_angle(self):
        return float(np.arccos(np.clip(self.axis_unit[2], -1.0, 1.0)))


@dataclass
class CollectionBudget:
    collected_fraction: float
    loss_chain: list
    detected_per_excitation: float
    expected_counts: float


def mirror_band_angles(ion_z: float, mirror: MirrorSpec):
    """(hole edge, rim edge) polar angles from the downward axis, radians."""
    sag_hole = float(mirror.sag(mirror.hole_radius))
    if ion_z <= sag_hole:
        raise IonInsideElectrode("ion at or below the vertex hole mouth")
    beta_hole = float(np.arctan2(mirror.hole_radius, ion_z - sag_hole))
    beta_rim = float(
        np.arctan2(mirror.aperture_radius, ion_z - mirror.cap_height)
    )
    return beta_hole, beta_rim


def needle_shadow_angle(ion_z: float, needle: NeedleSpec, n_scan: int = 2001):
    """Largest polar angle subtended by the needle silhouette from the ion."""
    if ion_z <= needle.tip_z:
        raise IonInsideElectrode("ion at or below the needle tip")
    z = np.linspace(min(needle.cone_base_z, needle.tip_z) - 5.0, needle.tip_z, n_scan)
    r = needle.silhouette_radius(z)
    ang = np.arctan2(r, ion_z - z)
    return float(ang.max())


def _band_fraction_isotropic(u_lo, u_hi):
    # u = cos(theta); band theta in [t1, t2] has u in [cos t2, cos t1]
    return 0.5 * (u_hi - u_lo)


def _band_fraction_dipole(u_lo, u_hi, axis_polar):
    """Dipole-pattern weight of a polar band, azimuthally averaged.

    With s = sin(gamma) for axis tilt gamma, the azimuthal average of
    sin^2(alpha) at polar angle theta (u = cos theta) is
    1 - c^2 u^2 - s^2 (1-u^2)/2, and the band integral follows analytically.
    """
    c2 = np.cos(axis_polar) ** 2
    s2 = 1.0 - c2

    def anti(u):
        return 0.75 * ((1.0 - s2 / 2.0) * u - (c2 - s2 / 2.0) * u**3 / 3.0)

    return anti(u_hi) - anti(u_lo)


def dipole_cap_fraction(axis_polar_angle: float, theta1: float):
    """Dipole emission fraction into the polar cap theta in [theta1, pi].

    For the axis along z this reduces to (1/4)(2 - cos t1)(1 + cos t1)^2,
    which is 1 for the full sphere and 1/2 for a hemisphere.
    """
    if not 0.0 <= theta1 <= np.pi + 1e-12:
        raise ConfigError("theta1 must lie in [0, pi]")
    u_hi = float(np.cos(theta1))
    return float(_band_fraction_dipole(-1.0, u_hi, axis_polar_angle))


def _pattern_values(emission: EmissionModel, dirs):
    """Emission pdf values (1/sr) for unit direction rows."""
    if emission.kind == "isotropic":
        return np.full(len(dirs), 1.0 / (4.0 * np.pi))
    a = emission.axis_unit
    cos_a = dirs @ a
    return 3.0 * (1.0 - cos_a**2) / (8.0 * np.pi)


def _accepted(theta, beta_hole, beta_rim, shadow):
    lo = max(beta_hole, shadow)
    return (theta > lo) & (theta < beta_rim)


def solid_angle(
    ion_z: float,
    mirror: MirrorSpec,
    needle: NeedleSpec = None,
    emission: EmissionModel = EmissionModel(),
    mode: str = "analytic",
    n_samples: int = 200_000,
    seed: int = 0,
):
    """Fraction of emission hitting the reflective annulus from an axial ion.

    Returns a dict with geometric_fraction and weighted_fraction; Monte Carlo
    mode adds standard errors. The needle shadow is a cone about theta = 0
    and is absorbed into the lower band edge.
    """
    beta_hole, beta_rim = mirror_band_angles(ion_z, mirror)
    shadow = 0.0 if needle is None else needle_shadow_angle(ion_z, needle)
    lo = max(beta_hole, shadow)
    if mode == "analytic":
        u_lo, u_hi = np.cos(beta_rim), np.cos(lo)
        geo = _band_fraction_isotropic(u_lo, u_hi)
        if emission.kind == "isotropic":
            wgt = geo
        else:
            # acceptance band sits below the ion: polar-from-z = pi - theta
            wgt = _band_fraction_dipole(
                np.cos(np.pi - lo), np.cos(np.pi - beta_rim), emission.axis_polar_angle
            )
            wgt = abs(wgt)
        return {"geometric_fraction": float(geo), "weighted_fraction": float(wgt)}
    if mode == "quadrature":
        # midpoint rule over the exact band [lo, beta_rim]: the integrand is
        # smooth there, so the rule is second order in the step
        n = max(int(n_samples), 1001)
        h = (beta_rim - lo) / n
        theta = lo + (np.arange(n) + 0.5) * h
        if emission.kind == "isotropic":
            pat = np.full(n, 1.0 / (4.0 * np.pi))
        else:
            # pdf averaged over azimuth at fixed polar angle; u is the
            # cosine measured from +z while theta is from the downward axis
            u = -np.cos(theta)
            c2 = np.cos(emission.axis_polar_angle) ** 2
            s2 = 1.0 - c2
            pat = 3.0 / (8.0 * np.pi) * (1.0 - c2 * u * u - s2 * (1.0 - u * u) / 2.0)
        w = 2.0 * np.pi * np.sin(theta) * h
        geo = float(w.sum() / (4.0 * np.pi))
        wgt = float((w * pat).sum())
        return {"geometric_fraction": geo, "weighted_fraction": wgt}
    if mode == "mc":
        rng = np.random.default_rng(seed)
        u = rng.uniform(-1.0, 1.0, n_samples)
        phi = rng.uniform(0.0, 2.0 * np.pi, n_samples)
        st = np.sqrt(1.0 - u * u)
        dirs = np.stack([st * np.cos(phi), st * np.sin(phi), u], axis=1)
        theta = np.arccos(np.clip(-u, -1.0, 1.0))  # from the downward axis
        acc = _accepted(theta, beta_hole, beta_rim, shadow)
        geo = float(acc.mean())
        geo_se = float(np.sqrt(max(geo * (1.0 - geo), 1e-300) / n_samples))
        pat = _pattern_values(emission, dirs) * 4.0 * np.pi
        vals = np.where(acc, pat, 0.0)
        wgt = float(vals.mean())
        wgt_se = float(vals.std(ddof=1) / np.sqrt(n_samples))
        return {
            "geometric_fraction": geo,
            "weighted_fraction": wgt,
            "geometric_stderr": geo_se,
            "weighted_stderr": wgt_se,
        }
    raise ConfigError(f"unknown solid_angle mode {mode!r}")


def na_equivalent(fraction: float):
    """Equivalent symmetric-cone numbers: {omega_sr, na, clipped}.

    fraction > 0.5 exceeds a hemisphere; the NA is clipped to 1 and flagged.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError("fraction must lie in [0, 1]")
    omega = 4.0 * np.pi * fraction
    clipped = fraction > 0.5
    cos_t = 1.0 - 2.0 * min(fraction, 0.5)
    na = float(np.sin(np.arccos(np.clip(cos_t, -1.0, 1.0))))
    if clipped:
        na = 1.0
    return {"omega_sr": float(omega), "na": na, "clipped": bool(clipped)}


DEFAULT_LOSS_CHAIN = (
    ("mirror_reflectivity", 0.90),
    ("viewport", 0.95),
    ("corrector", 0.92),
    ("objective", 0.85),
    ("beamsplitter", 0.70),
    ("detector_qe", 0.089),
)


def photon_budget(weighted_fraction: float, loss_chain=DEFAULT_LOSS_CHAIN,
                  n_excitations: float = 1_000_000):
    """Counts after the multiplicative loss chain."""
    if not 0.0 <= weighted_fraction <= 1.0:
        raise ConfigError("weighted_fraction must lie in [0, 1]")
    through = 1.0
    chain = []
    for name, t in loss_chain:
        if not 0.0 <= t <= 1.0:
            raise ConfigError(f"transmittance {name!r} outside [0, 1]")
        through *= t
        chain.append((name, float(t)))
    per_exc = weighted_fraction * through
    return CollectionBudget(
        collected_fraction=float(weighted_fraction),
        loss_chain=chain,
        detected_per_excitation=float(per_exc),
        expected_counts=float(per_exc * n_excitations),
    )


def fraction_vs_position(z_values, mirror: MirrorSpec, needle: NeedleSpec = None,
                         emission: EmissionModel = EmissionModel()):
    """Geometric and weighted fractions along a list of axial ion positions."""
    rows = []
    for z in z_values:
        res = solid_angle(float(z), mirror, needle, emission, mode="analytic")
        rows.append((float(z), res["geometric_fraction"], res["weighted_fraction"]))
    return rows
