"""Sequential geometric ray tracing in three dimensions.

All lengths here are meters (geometry specs are millimeters; stack builders
convert). A bundle is a struct of arrays; dead rays keep their last state and
are excluded from spots. Optical path length accumulates n * segment length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import (
    ConfigError,
    NoRaysReachPlane,
    TotalInternalReflection,
)
from .geometry import ConicSurface, MirrorSpec

EPS_T = 1e-12  # m, minimum travel to count an intersection
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    opl: float = 0.0
    alive: bool = True

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-12:
            if norm == 0:
                raise ConfigError("ray direction must be nonzero")
            self.direction = self.direction / norm


@dataclass
class RayBundle:
    p: np.ndarray        # (n, 3) positions
    d: np.ndarray        # (n, 3) unit directions
    opl: np.ndarray      # (n,)
    alive: np.ndarray    # (n,) bool
    n_medium: float = 1.0

    @classmethod
    def from_rays(cls, rays):
        return cls(
            p=np.array([r.origin for r in rays], dtype=float),
            d=np.array([r.direction for r in rays], dtype=float),
            opl=np.array([r.opl for r in rays], dtype=float),
            alive=np.array([r.alive for r in rays], dtype=bool),
        )

    def copy(self):
        return RayBundle(
            self.p.copy(), self.d.copy(), self.opl.copy(), self.alive.copy(),
            self.n_medium,
        )

    def __len__(self):
        return len(self.p)


def mirror_surface(mirror: MirrorSpec) -> ConicSurface:
    """Mirror shape in meters with the vertex at z = 0."""
    return ConicSurface(
        vertex_z=0.0,
        curvature=mirror.curvature * 1e3,   # 1/mm -> 1/m
        conic_constant=mirror.conic_constant,
        r_min=mirror.hole_radius * 1e-3,
        r_max=mirror.aperture_radius * 1e-3,
        kind="mirror",
    )


def _conic_intersect(surface: ConicSurface, p, d):
    """Smallest t > EPS_T hitting the sag branch inside the aperture.

    Returns (t, normal) arrays; t = inf and normal = 0 for misses. The conic
    quadric has two roots; each is checked against the sag branch because the
    quadric also contains the far cap (for example the upper half of a
    sphere), which is not part of the surface.
    """
    c = surface.curvature
    k = surface.conic_constant
    rel = p.copy()
    rel[:, 2] -= surface.vertex_z
    a = c * (d[:, 0] ** 2 + d[:, 1] ** 2) + c * (1 + k) * d[:, 2] ** 2
    b = (
        2 * c * (rel[:, 0] * d[:, 0] + rel[:, 1] * d[:, 1])
        + 2 * c * (1 + k) * rel[:, 2] * d[:, 2]
        - 2 * d[:, 2]
    )
    cc = (
        c * (rel[:, 0] ** 2 + rel[:, 1] ** 2)
        + c * (1 + k) * rel[:, 2] ** 2
        - 2 * rel[:, 2]
    )
    t_best = np.full(len(p), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.where(b != 0, -cc / np.where(b != 0, b, 1.0), np.inf)
        disc = b * b - 4 * a * cc
        sq = np.sqrt(np.maximum(disc, 0.0))
        denom = np.where(a != 0, 2 * a, 1.0)
        roots = np.stack(
            [
                np.where(a != 0, (-b - sq) / denom, lin),
                np.where(a != 0, (-b + sq) / denom, np.inf),
            ],
            axis=1,
        )
    roots = np.where(np.isfinite(roots) & (disc[:, None] >= 0) | (a == 0)[:, None],
                     roots, np.inf)
    roots.sort(axis=1)
    for col in range(2):
        t = roots[:, col]
        cand = np.isfinite(t) & (t > EPS_T) & (t < t_best)
        if not cand.any():
            continue
        hit = p + np.where(np.isfinite(t), t, 0.0)[:, None] * d
        rho = np.hypot(hit[:, 0], hit[:, 1])
        in_ap = (rho >= surface.r_min - 1e-12) & (rho <= surface.r_max + 1e-12)
        zrel = hit[:, 2] - surface.vertex_z
        max_r = (
            1.0 / (abs(c) * np.sqrt(1 + k)) if (1 + k) > 0 and c != 0 else np.inf
        )
        on_branch = np.abs(
            zrel - (surface.sag(np.minimum(rho, max_r * (1 - 1e-12))) - surface.vertex_z)
        ) < 1e-9 + 1e-6 * np.abs(zrel)
        ok = cand & in_ap & on_branch
        t_best = np.where(ok, t, t_best)
    hit = p + np.where(np.isfinite(t_best), t_best, 0.0)[:, None] * d
    n = np.zeros_like(p)
    valid = np.isfinite(t_best)
    if valid.any():
        hv = hit[valid]
        zrel = hv[:, 2] - surface.vertex_z
        grad = np.stack(
            [
                2 * c * hv[:, 0],
                2 * c * hv[:, 1],
                2 * c * (1 + k) * zrel - 2,
            ],
            axis=1,
        )
        grad /= np.linalg.norm(grad, axis=1)[:, None]
        # orient against the incoming ray
        sgn = np.sign((grad * d[valid]).sum(axis=1))
        sgn = np.where(sgn == 0, 1.0, sgn)
        n[valid] = -grad * sgn[:, None]
    return t_best, n


def _reflect_dirs(d, n):
    return d - 2.0 * (d * n).sum(axis=1)[:, None] * n


def _refract_dirs(d, n, n1, n2):
    """Vector Snell; returns (directions, tir_mask). n oriented against d."""
    mu = n1 / n2
    cos_i = -(d * n).sum(axis=1)
    sin2_t = mu * mu * (1.0 - cos_i * cos_i)
    tir = sin2_t > 1.0
    cos_t = np.sqrt(np.maximum(1.0 - sin2_t, 0.0))
    out = mu * d + (mu * cos_i - cos_t)[:, None] * n
    norm = np.linalg.norm(out, axis=1)
    out = out / np.where(norm > 0, norm, 1.0)[:, None]
    return out, tir


class ConicMirrorElement:
    def __init__(self, surface: ConicSurface):
        self.surface = surface

    def propagate(self, b: RayBundle, record):
        t, n = _conic_intersect(self.surface, b.p, b.d)
        ok = b.alive & np.isfinite(t)
        b.alive &= np.isfinite(t)
        t = np.where(ok, t, 0.0)
        b.p = b.p + t[:, None] * b.d
        b.opl = b.opl + b.n_medium * t
        b.d[ok] = _reflect_dirs(b.d[ok], n[ok])
        record.append(b.p.copy())


class FlatRefractionElement:
    """Plane z = const separating media n1 -> n2 (normal along z)."""

    def __init__(self, z, n_out):
        self.z = z
        self.n_out = n_out

    def propagate(self, b: RayBundle, record):
        dz = b.d[:, 2]
        t = np.where(dz != 0, (self.z - b.p[:, 2]) / np.where(dz != 0, dz, 1.0), -1.0)
        ok = b.alive & (t > EPS_T)
        b.alive &= t > EPS_T
        t = np.where(ok, t, 0.0)
        b.p = b.p + t[:, None] * b.d
        b.opl = b.opl + b.n_medium * t
        normal = np.zeros_like(b.d)
        normal[:, 2] = -np.sign(dz)
        newd, tir = _refract_dirs(b.d, normal, b.n_medium, self.n_out)
        b.alive &= ~tir
        live = b.alive
        b.d[live] = newd[live]
        b.n_medium = self.n_out
        record.append(b.p.copy())


class PlaneWindowElement:
    """Parallel slab: entry at z, exit at z + thickness, index n inside."""

    def __init__(self, z, thickness, n, n_outside=1.0):
        self.entry = FlatRefractionElement(z, n)
        self.exit = FlatRefractionElement(z + thickness, n_outside)

    def propagate(self, b: RayBundle, record):
        self.entry.propagate(b, record)
        self.exit.propagate(b, record)


class AsphereElement:
    """Refraction at a tabulated rotationally symmetric surface z = S(rho).

    Rays are found by Newton iteration on z(t) - S(rho(t)) with a brentq
    fallback; the spline is cubic through the samples.
    """

    def __init__(self, r_samples, z_samples, n_out):
        r_samples = np.asarray(r_samples, dtype=float)
        z_samples = np.asarray(z_samples, dtype=float)
        if len(r_samples) < 4 or np.any(np.diff(r_samples) <= 0):
            raise ConfigError("asphere samples must be >= 4 and increasing in r")
        self.spline = CubicSpline(r_samples, z_samples)
        self.r_lo = r_samples[0]
        self.r_hi = r_samples[-1]
        self.n_out = n_out

    def _surface_z(self, rho):
        return self.spline(np.clip(rho, self.r_lo, self.r_hi))

    def _surface_slope(self, rho):
        return self.spline(np.clip(rho, self.r_lo, self.r_hi), 1)

    def propagate(self, b: RayBundle, record):
        zc = 0.5 * (self.spline(self.r_lo) + self.spline(self.r_hi))
        dz = np.where(b.d[:, 2] != 0, b.d[:, 2], 1e-300)
        t = (zc - b.p[:, 2]) / dz
        t = np.where(t > 0, t, 0.0)
        for _ in range(60):
            hit = b.p + t[:, None] * b.d
            rho = np.hypot(hit[:, 0], hit[:, 1])
            g = hit[:, 2] - self._surface_z(rho)
            sp = self._surface_slope(rho)
            with np.errstate(divide="ignore", invalid="ignore"):
                drho_dt = np.where(
                    rho > 0,
                    (hit[:, 0] * b.d[:, 0] + hit[:, 1] * b.d[:, 1]) / np.where(rho > 0, rho, 1.0),
                    np.hypot(b.d[:, 0], b.d[:, 1]),
                )
            dg = b.d[:, 2] - sp * drho_dt
            step = np.where(np.abs(dg) > 1e-300, g / np.where(dg == 0, 1.0, dg), 0.0)
            t = t - step
            if np.all(np.abs(g[b.alive]) < 1e-13) if b.alive.any() else True:
                break
        hit = b.p + t[:, None] * b.d
        rho = np.hypot(hit[:, 0], hit[:, 1])
        resid = np.abs(hit[:, 2] - self._surface_z(rho))
        for i in np.nonzero(b.alive & ((resid > 1e-10) | (t <= EPS_T)))[0]:
            t_i = self._bracketed(b.p[i], b.d[i])
            if t_i is None:
                b.alive[i] = False
            else:
                t[i] = t_i
        ok = b.alive & (t > EPS_T)
        in_ap = np.ones(len(b.p), dtype=bool)
        hit = b.p + t[:, None] * b.d
        rho = np.hypot(hit[:, 0], hit[:, 1])
        in_ap = (rho >= self.r_lo - 1e-12) & (rho <= self.r_hi + 1e-12)
        ok &= in_ap
        b.alive &= ok
        t = np.where(ok, t, 0.0)
        b.p = b.p + t[:, None] * b.d
        b.opl = b.opl + b.n_medium * t
        rho = np.hypot(b.p[:, 0], b.p[:, 1])
        sp = self._surface_slope(rho)
        safe = np.where(rho > 0, rho, 1.0)
        normal = np.stack(
            [
                -sp * np.where(rho > 0, b.p[:, 0] / safe, 0.0),
                -sp * np.where(rho > 0, b.p[:, 1] / safe, 0.0),
                np.ones_like(rho),
            ],
            axis=1,
        )
        normal /= np.linalg.norm(normal, axis=1)[:, None]
        sgn = np.sign((normal * b.d).sum(axis=1))
        normal = -normal * np.where(sgn == 0, 1.0, sgn)[:, None]
        newd, tir = _refract_dirs(b.d, normal, b.n_medium, self.n_out)
        b.alive &= ~tir
        b.d[b.alive] = newd[b.alive]
        b.n_medium = self.n_out
        record.append(b.p.copy())

    def _bracketed(self, p, d):
        def g(t):
            hit = p + t * d
            rho = np.hypot(hit[0], hit[1])
            return hit[2] - float(self.spline(np.clip(rho, self.r_lo, self.r_hi)))

        z_near = min(float(self.spline(self.r_lo)), float(self.spline(self.r_hi)))
        z_far = max(float(self.spline(self.r_lo)), float(self.spline(self.r_hi)))
        if d[2] <= 0:
            return None
        t_lo = max((z_near - p[2]) / d[2] * 0.2, EPS_T)
        t_hi = (z_far - p[2]) / d[2] * 3.0 + 1e-3
        if g(t_lo) * g(t_hi) > 0:
            return None
        return brentq(g, t_lo, t_hi, xtol=1e-15)


@dataclass
class SurfaceStack:
    elements: list = field(default_factory=list)

    def trace(self, bundle: RayBundle):
        """Returns (final bundle, list of per-surface hit arrays)."""
        b = bundle.copy()
        record = [b.p.copy()]
        for el in self.elements:
            el.propagate(b, record)
        return b, record


def emit_bundle(source, n_rays, max_polar_angle, min_polar_angle=0.0, axis=-1.0):
    """Deterministic fan, uniform in solid angle over the polar band.

    Polar angle is measured from the emission axis (axis=-1 points into the
    bowl, toward -z); azimuths follow the golden-angle spiral.
    """
    if n_rays < 1:
        raise ConfigError("need at least one ray")
    u_lo = np.cos(max_polar_angle)
    u_hi = np.cos(min_polar_angle)
    i = np.arange(n_rays)
    u = u_lo + (u_hi - u_lo) * (i + 0.5) / n_rays
    phi = i * GOLDEN_ANGLE
    sin_t = np.sqrt(np.maximum(1.0 - u * u, 0.0))
    d = np.stack(
        [sin_t * np.cos(phi), sin_t * np.sin(phi), axis * u], axis=1
    )
    p = np.tile(np.asarray(source, dtype=float), (n_rays, 1))
    return RayBundle(
        p=p, d=d, opl=np.zeros(n_rays), alive=np.ones(n_rays, dtype=bool)
    )


def trace_bundle(source, stack: SurfaceStack, n_rays, max_polar_angle,
                 min_polar_angle=0.0):
    bundle = emit_bundle(source, n_rays, max_polar_angle, min_polar_angle)
    traced, _record = stack.trace(bundle)
    return traced


@dataclass
class SpotDiagram:
    plane_z: float
    hits: np.ndarray          # (n, 2)
    centroid: np.ndarray      # (2,)
    rms_radius: float
    fwhm_estimate: float


def spot(bundle: RayBundle, plane_z) -> SpotDiagram:
    """Transverse hit pattern on the plane z = plane_z."""
    dz = bundle.d[:, 2]
    ok = bundle.alive & (dz != 0)
    t = np.where(ok, (plane_z - bundle.p[:, 2]) / np.where(dz == 0, 1.0, dz), -1.0)
    ok &= t >= -1e-12
    if not ok.any():
        raise NoRaysReachPlane(f"no alive ray crosses z = {plane_z}")
    hits = bundle.p[ok] + t[ok, None] * bundle.d[ok]
    xy = hits[:, :2]
    centroid = xy.mean(axis=0)
    rel = xy - centroid
    rms = float(np.sqrt((rel**2).sum(axis=1).mean()))
    sigma_x = float(np.sqrt((rel[:, 0] ** 2).mean()))
    return SpotDiagram(
        plane_z=float(plane_z),
        hits=xy,
        centroid=centroid,
        rms_radius=rms,
        fwhm_estimate=2.355 * sigma_x,
    )


def best_focus(bundle: RayBundle, z_lo, z_hi, n_scan: int = 201):
    """Plane of minimum rms radius over a uniform scan with parabolic refine."""
    zs = np.linspace(z_lo, z_hi, n_scan)
    rms = np.array([spot(bundle, z).rms_radius for z in zs])
    j = int(np.argmin(rms))
    if 0 < j < len(zs) - 1:
        y0, y1, y2 = rms[j - 1], rms[j], rms[j + 1]
        denom = y0 - 2 * y1 + y2
        dz = 0.5 * (y0 - y2) / denom if denom > 0 else 0.0
        z_best = zs[j] + np.clip(dz, -1, 1) * (zs[1] - zs[0])
    else:
        z_best = zs[j]
    return float(z_best), spot(bundle, float(z_best))


def intersect(ray: Ray, surface) -> Optional[tuple]:
    """(point, unit normal toward the ray) or None on miss."""
    b = RayBundle.from_rays([ray])
    if isinstance(surface, ConicSurface):
        t, n = _conic_intersect(surface, b.p, b.d)
        if not np.isfinite(t[0]):
            return None
        return b.p[0] + t[0] * b.d[0], n[0]
    raise ConfigError(f"unsupported surface type {type(surface).__name__}")


def reflect(ray: Ray, point, normal) -> Ray:
    seg = float(np.linalg.norm(np.asarray(point) - ray.origin))
    d = _reflect_dirs(ray.direction[None, :], np.asarray(normal)[None, :])[0]
    return Ray(origin=np.asarray(point, float), direction=d, opl=ray.opl + seg)


def refract(ray: Ray, point, normal, n1, n2) -> Ray:
    seg = float(np.linalg.norm(np.asarray(point) - ray.origin))
    d, tir = _refract_dirs(
        ray.direction[None, :], np.asarray(normal, float)[None, :], n1, n2
    )
    if tir[0]:
        raise TotalInternalReflection("refraction discriminant negative")
    return Ray(origin=np.asarray(point, float), direction=d[0], opl=ray.opl + n1 * seg)
