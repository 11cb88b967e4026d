"""Aspheric collimator synthesis for the mirror's aberrated bundle.

The corrector is a single element in air behind the vacuum window: flat front
face toward the chamber, machined rear surface. For each design ray (emission
angle beta from the source) the rear surface point and normal are fixed by
requiring the exit ray parallel to the axis with equal optical path length
for every ray; integrating that slope field outward from the innermost ray
yields the surface. All lengths in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from numpy.polynomial import polynomial as _poly
from scipy.integrate import solve_ivp

from .errors import (
    BundleNotSingleValued,
    ConfigError,
    EmptyProfile,
    IoError,
    PhysicsError,
    SlopeUnmanufacturable,
)
from .geometry import MirrorSpec
from .rays import (
    AsphereElement,
    ConicMirrorElement,
    FlatRefractionElement,
    PlaneWindowElement,
    RayBundle,
    SpotDiagram,
    SurfaceStack,
    _conic_intersect,
    _reflect_dirs,
    mirror_surface,
)

MAX_SLOPE = np.tan(np.radians(80.0))


@dataclass(frozen=True)
class PlaneWindow:
    z: float = 40.0e-3            # entry face, m
    thickness: float = 4.0e-3     # m
    n: float = 1.458              # fused silica at 493 nm

    def __post_init__(self):
        if self.thickness <= 0 or self.n <= 1.0:
            raise ConfigError("window needs thickness > 0 and n > 1")


@dataclass(frozen=True)
class CorrectorDesignSpec:
    source_z: float = 2.25e-3
    mirror: MirrorSpec = MirrorSpec()
    window: PlaneWindow = PlaneWindow()
    front_face_z: float = 48.0e-3
    material_index: float = 1.49      # acrylic at 493 nm
    design_ray_count: int = 801
    min_emission_angle: float = np.radians(11.0)
    max_emission_angle: float = np.radians(71.0)
    inner_thickness: float = 9.0e-3   # glass thickness at the innermost ray

    def __post_init__(self):
        if self.front_face_z < self.window.z + self.window.thickness:
            raise ConfigError("front face must sit beyond the window")
        if not 0 < self.min_emission_angle < self.max_emission_angle < np.pi / 2:
            raise ConfigError("emission band must satisfy 0 < min < max < 90 deg")
        if self.material_index <= 1.0:
            raise ConfigError("corrector index must exceed 1")
        if self.design_ray_count < 16:
            raise ConfigError("need at least 16 design rays")


@dataclass
class AsphereProfile:
    """Tabulated rear-surface sag plus a fitted even-polynomial summary.

    coefficients = (z0, a2, a4, ..., a12) for z(r) = z0 + sum a_2i r^(2i);
    the tabulated samples are authoritative for tracing.
    """

    r: np.ndarray                 # m, strictly increasing
    z: np.ndarray                 # m
    coefficients: np.ndarray      # (7,) z0, a2..a12
    fit_residual_rms: float       # m
    material_index: float
    front_face_z: float
    design_band: tuple            # (min, max) emission angle, rad
    source_z: float

    def sag_poly(self, r):
        u = np.asarray(r, dtype=float) ** 2
        out = np.zeros_like(u)
        for c in self.coefficients[::-1]:
            out = out * u + c
        return out

    def slope(self, r=None):
        rr = self.r if r is None else np.asarray(r)
        return np.interp(rr, self.r, np.gradient(self.z, self.r))


def _meridional_front(spec: CorrectorDesignSpec, beta):
    """Trace emission angles to the corrector front face, meridional plane.

    Returns (rho0, d_glass, L_in): radius at the front face, in-glass unit
    direction (d_rho, d_z) with d_rho > 0 outward, and the optical path from
    the source to the front face. Raises BundleNotSingleValued when any ray
    has not finished crossing the axis.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    n = len(beta)
    surf = mirror_surface(spec.mirror)
    p = np.zeros((n, 3))
    p[:, 2] = spec.source_z
    d = np.stack([np.sin(beta), np.zeros(n), -np.cos(beta)], axis=1)
    t, nrm = _conic_intersect(surf, p, d)
    if not np.all(np.isfinite(t)):
        raise BundleNotSingleValued("a design ray misses the mirror aperture")
    hit = p + t[:, None] * d
    dref = _reflect_dirs(d, nrm)
    if np.any(dref[:, 2] <= 0):
        raise BundleNotSingleValued("a design ray does not travel toward +z")
    # window entry/exit (flat, normals along z)
    nw = spec.window.n
    t1 = (spec.window.z - hit[:, 2]) / dref[:, 2]
    if np.any(t1 <= 0):
        raise BundleNotSingleValued("a design ray reflects beyond the window")
    pw = hit + t1[:, None] * dref
    sin_air = np.hypot(dref[:, 0], dref[:, 1])
    sin_w = sin_air / nw
    cos_w = np.sqrt(1.0 - sin_w**2)
    scale = np.where(sin_air > 0, sin_w / np.where(sin_air == 0, 1.0, sin_air), 0.0)
    dw = np.stack([dref[:, 0] * scale, dref[:, 1] * scale, cos_w], axis=1)
    t2 = spec.window.thickness / dw[:, 2]
    pw2 = pw + t2[:, None] * dw
    t3 = (spec.front_face_z - pw2[:, 2]) / dref[:, 2]
    pf = pw2 + t3[:, None] * dref
    # into the corrector glass
    ng = spec.material_index
    sin_g = sin_air / ng
    if np.any(sin_g >= 1.0):
        raise PhysicsError("design ray exceeds the critical angle at the front face")
    cos_g = np.sqrt(1.0 - sin_g**2)
    scale_g = np.where(sin_air > 0, sin_g / np.where(sin_air == 0, 1.0, sin_air), 0.0)
    dgl_x = dref[:, 0] * scale_g
    l_in = t + t1 + nw * t2 + t3
    x = pf[:, 0]
    crossed = (x != 0) & (np.sign(dgl_x) == np.sign(x))
    if not np.all(crossed):
        raise BundleNotSingleValued(
            "bundle still crossing at the front face; move the corrector farther"
        )
    rho0 = np.abs(x)
    d_glass = np.stack([np.abs(dgl_x), cos_g], axis=1)
    return rho0, d_glass, l_in


def design(spec: CorrectorDesignSpec) -> AsphereProfile:
    """Synthesize the rear surface by integrating the collimation slope field.

    The surface point along ray beta is P(beta) = P0(beta) + t(beta) d(beta)
    with P0 on the front face and d the in-glass direction. Writing the local
    surface normal for an axis-parallel exit as N = n d - z_hat, tangency of
    dP/dbeta with the surface gives
        dt/dbeta = -(dP0/dbeta . N + t (dd/dbeta . N)) / (d . N),
    integrated outward from the innermost design ray where t equals the
    configured inner thickness. Equal source-to-exit-plane optical path for
    every ray is checked afterwards.
    """
    betas = np.linspace(
        spec.min_emission_angle, spec.max_emission_angle, spec.design_ray_count
    )
    rho0, dgl, l_in = _meridional_front(spec, betas)
    if np.any(np.diff(rho0) <= 0):
        raise BundleNotSingleValued("front-face radius not monotone in angle")
    ng = spec.material_index
    db = 1e-7

    def rhs(beta, tvec):
        b3 = np.array([beta - db, beta, beta + db])
        r3, d3, _ = _meridional_front(spec, b3)
        nvec = ng * d3[1] - np.array([0.0, 1.0])
        dp0 = np.array([(r3[2] - r3[0]) / (2 * db), 0.0])
        dd = (d3[2] - d3[0]) / (2 * db)
        return [-(dp0 @ nvec + tvec[0] * (dd @ nvec)) / (d3[1] @ nvec)]

    sol = solve_ivp(
        rhs,
        (betas[0], betas[-1]),
        [spec.inner_thickness],
        t_eval=betas,
        rtol=1e-11,
        atol=1e-14,
        method="RK45",
    )
    if not sol.success:
        raise PhysicsError(f"slope-field integration failed: {sol.message}")
    t = sol.y[0]
    if np.any(t <= 0):
        raise PhysicsError("designed thickness went nonpositive; raise inner_thickness")
    r_s = rho0 + t * dgl[:, 0]
    z_s = spec.front_face_z + t * dgl[:, 1]
    if np.any(np.diff(r_s) <= 0):
        raise BundleNotSingleValued("designed surface folds over in radius")
    slope = np.gradient(z_s, r_s)
    if np.any(np.abs(slope) >= MAX_SLOPE):
        raise SlopeUnmanufacturable("rear-surface slope exceeds tan(80 deg)")

    # constant optical path from source to the exit plane
    z_ref = z_s.max() + 1e-3
    opl = l_in + ng * t + (z_ref - z_s)
    if opl.max() - opl.min() > 1e-9:
        raise PhysicsError(
            f"optical path spread {opl.max() - opl.min():.3e} m exceeds 1e-9"
        )

    coeffs, resid = _fit_even_poly(r_s, z_s)
    return AsphereProfile(
        r=r_s,
        z=z_s,
        coefficients=coeffs,
        fit_residual_rms=resid,
        material_index=ng,
        front_face_z=spec.front_face_z,
        design_band=(spec.min_emission_angle, spec.max_emission_angle),
        source_z=spec.source_z,
    )


def _fit_even_poly(r, z, n_even_terms: int = 6):
    """Least squares in a scaled Chebyshev basis on u = r^2, converted back to
    raw even coefficients (z0, a2, ..., a12). The raw power basis on a wide
    annulus is numerically singular; the scaled fit is equivalent and stable.
    """
    u = np.asarray(r, dtype=float) ** 2
    u_lo, u_hi = float(u.min()), float(u.max())
    span = max(u_hi - u_lo, 1e-300)
    w = (2.0 * u - (u_hi + u_lo)) / span
    cf = _cheb.chebfit(w, z, n_even_terms)
    resid = _cheb.chebval(w, cf) - z
    rms = float(np.sqrt(np.mean(resid**2)))
    pw = _cheb.cheb2poly(cf)                      # polynomial in w
    alpha = 2.0 / span
    gamma = -(u_hi + u_lo) / span
    comp = np.zeros(1)
    basis = np.ones(1)                            # (gamma + alpha u)^k, ascending
    for ck in pw:
        comp = _poly.polyadd(comp, ck * basis)
        basis = _poly.polymul(basis, np.array([gamma, alpha]))
    coeffs = np.zeros(n_even_terms + 1)
    coeffs[: len(comp)] = comp[: n_even_terms + 1]
    return coeffs, rms


def build_elements(profile: AsphereProfile):
    """Stack elements for the corrector: flat entry plus tabulated rear face."""
    return [
        FlatRefractionElement(profile.front_face_z, profile.material_index),
        AsphereElement(profile.r, profile.z, 1.0),
    ]


def full_stack(spec: CorrectorDesignSpec, profile: Optional[AsphereProfile] = None):
    """Mirror + window (+ corrector when a profile is given)."""
    elements = [
        ConicMirrorElement(mirror_surface(spec.mirror)),
        PlaneWindowElement(spec.window.z, spec.window.thickness, spec.window.n),
    ]
    if profile is not None:
        elements += build_elements(profile)
    return SurfaceStack(elements)


@dataclass
class VerifyReport:
    direction_spread: float       # rad, max exit angle from the axis
    opl_spread: float             # m, max-min source->reference-plane path
    refocus_spot: SpotDiagram
    ion_referred_rms: float       # m, spot rms referred back to the source
    comparison_na: float
    alive_fraction: float


def verify(
    profile: AsphereProfile,
    spec: CorrectorDesignSpec,
    n_rays: int = 1500,
    comparison_na: float = 0.26,
    band_margin: float = 2e-3,
) -> VerifyReport:
    """Re-trace a fresh bundle (offset from the design rays) and measure
    collimation, wavefront flatness, and the spot behind an ideal refocus
    lens of the given numerical aperture.
    """
    b_lo = spec.min_emission_angle + band_margin
    b_hi = spec.max_emission_angle - band_margin
    i = np.arange(n_rays)
    u = np.cos(b_hi) + (np.cos(b_lo) - np.cos(b_hi)) * ((i + 0.37) / n_rays)
    beta = np.arccos(u)
    phi = i * (np.pi * (3.0 - np.sqrt(5.0)))
    d = np.stack(
        [np.sin(beta) * np.cos(phi), np.sin(beta) * np.sin(phi), -np.cos(beta)],
        axis=1,
    )
    p = np.zeros((n_rays, 3))
    p[:, 2] = spec.source_z
    bundle = RayBundle(
        p=p, d=d, opl=np.zeros(n_rays), alive=np.ones(n_rays, dtype=bool)
    )
    stack = full_stack(spec, profile)
    out, _ = stack.trace(bundle)
    alive = out.alive
    if not alive.any():
        raise PhysicsError("no verification ray survived the stack")
    dirs = out.d[alive]
    ang = np.arctan2(np.hypot(dirs[:, 0], dirs[:, 1]), dirs[:, 2])
    direction_spread = float(np.max(np.abs(ang)))
    z_ref = out.p[alive][:, 2].max() + 1e-3
    opl_tot = out.opl[alive] + (z_ref - out.p[alive][:, 2]) / dirs[:, 2]
    opl_spread = float(opl_tot.max() - opl_tot.min())

    # ideal thin refocus lens: a collimated ray of slope s lands at f*s
    h_max = float(profile.r.max())
    f = h_max / np.tan(np.arcsin(comparison_na))
    sx = dirs[:, 0] / dirs[:, 2]
    sy = dirs[:, 1] / dirs[:, 2]
    hits = f * np.stack([sx, sy], axis=1)
    centroid = hits.mean(axis=0)
    rel = hits - centroid
    rms = float(np.sqrt((rel**2).sum(axis=1).mean()))
    sigma_x = float(np.sqrt((rel[:, 0] ** 2).mean()))
    spot = SpotDiagram(
        plane_z=f,
        hits=hits,
        centroid=centroid,
        rms_radius=rms,
        fwhm_estimate=2.355 * sigma_x,
    )
    na_ion = np.sin(spec.max_emission_angle)
    ion_rms = rms * comparison_na / na_ion
    return VerifyReport(
        direction_spread=direction_spread,
        opl_spread=opl_spread,
        refocus_spot=spot,
        ion_referred_rms=float(ion_rms),
        comparison_na=comparison_na,
        alive_fraction=float(alive.mean()),
    )


def perturbed(profile: AsphereProfile, bump_height: float, bump_r: Optional[float] = None,
              bump_width: Optional[float] = None) -> AsphereProfile:
    """Copy of the profile with a Gaussian sag bump (sensitivity studies)."""
    r = profile.r
    r0 = 0.5 * (r[0] + r[-1]) if bump_r is None else bump_r
    w = 0.1 * (r[-1] - r[0]) if bump_width is None else bump_width
    z = profile.z + bump_height * np.exp(-((r - r0) ** 2) / (2 * w * w))
    return AsphereProfile(
        r=r.copy(),
        z=z,
        coefficients=profile.coefficients.copy(),
        fit_residual_rms=profile.fit_residual_rms,
        material_index=profile.material_index,
        front_face_z=profile.front_face_z,
        design_band=profile.design_band,
        source_z=profile.source_z,
    )


def export_profile(profile: AsphereProfile, path, pitch: float = 10e-6):
    """Machining table: header block with the even-polynomial coefficients,
    then CSV rows (r_mm, sag_mm, slope) at the requested pitch."""
    if profile.r is None or len(profile.r) == 0:
        raise EmptyProfile("profile has no samples")
    if pitch <= 0:
        raise ConfigError("pitch must be positive")
    r = np.arange(profile.r[0], profile.r[-1] + pitch / 2, pitch)
    from scipy.interpolate import CubicSpline

    spline = CubicSpline(profile.r, profile.z)
    z = spline(r)
    sl = spline(r, 1)
    names = ["z0"] + [f"a{2 * k}" for k in range(1, len(profile.coefficients))]
    try:
        with open(path, "w") as fh:
            fh.write(f"# material_index,{profile.material_index:.6g}\n")
            fh.write(f"# fit_residual_rms_m,{profile.fit_residual_rms:.6g}\n")
            for nm, c in zip(names, profile.coefficients):
                fh.write(f"# {nm},{c:.12g}\n")
            fh.write("r_mm,sag_mm,slope\n")
            for ri, zi, si in zip(r, z, sl):
                fh.write(f"{ri * 1e3:.12g},{zi * 1e3:.12g},{si:.12g}\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
