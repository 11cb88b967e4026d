"""Ponderomotive pseudopotential and trap observables.

The RF field is solved once at 1 V drive; the pseudopotential scales as
amplitude^2 / frequency^2 from there. Observables: axis minimum (sub-cell),
trap depth by sublevel-set flood fill, secular frequencies from stencil
curvatures, and needle-travel scans.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .constants import BA138_MASS_KG, ELEMENTARY_CHARGE, EV
from .errors import ConfigError, NoInteriorMinimum, SaddleNotMinimum
from .field import ScalarField2D, gradient, solve_laplace
from .geometry import GridSpec, TrapGeometry, rasterize


@dataclass(frozen=True)
class RfDrive:
    amplitude: float = 270.0        # V, zero-to-peak
    frequency: float = 23.0e6       # Hz

    def __post_init__(self):
        if self.amplitude <= 0 or self.frequency <= 0:
            raise ConfigError("drive amplitude and frequency must be positive")

    @property
    def omega(self):
        return 2.0 * np.pi * self.frequency


@dataclass(frozen=True)
class IonSpecies:
    mass: float = BA138_MASS_KG     # kg
    charge: float = ELEMENTARY_CHARGE  # C

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigError("ion mass must be positive")
        if self.charge == 0:
            raise ConfigError("ion charge must be nonzero")


@dataclass
class MinimumInfo:
    z: float                 # mm
    value: float             # eV
    above_tip: Optional[float]  # mm, when a needle tip reference exists
    index: int               # axis grid index of the bracketing cell
    r: float = 0.0


@dataclass
class DepthResult:
    depth: float             # eV above the minimum value
    escape_level: float      # eV, absolute level of the first escape event
    saddle: tuple            # (r, z) mm, approximate escape location
    event: str               # "boundary", "electrode", or "merge"


@dataclass
class TrapAnalysis:
    minimum: MinimumInfo
    depth: DepthResult
    axial_hz: float
    radial_hz: float


def pseudopotential(rf_field: ScalarField2D, drive: RfDrive, ion: IonSpecies):
    """Psi[eV] = q^2 A^2 |grad(phi_unit)|^2 / (4 m Omega^2 e)."""
    er, ez = gradient(rf_field)
    e2 = er * er + ez * ez
    pref = (
        ion.charge**2
        * drive.amplitude**2
        / (4.0 * ion.mass * drive.omega**2 * EV)
    )
    return ScalarField2D(
        values=pref * e2, grid=rf_field.grid, mask=rf_field.mask, unit="eV"
    )


def _axis_window_indices(psi: ScalarField2D, z_window):
    z = psi.z
    lo, hi = z_window
    j0 = int(np.searchsorted(z, lo, side="right"))
    j1 = int(np.searchsorted(z, hi, side="left"))
    return max(j0, 2), min(j1, len(z) - 3)


def find_minimum(
    psi: ScalarField2D, tip_z: Optional[float] = None, z_window=None
) -> MinimumInfo:
    """Lowest strict interior local minimum of Psi on the axis.

    The search window defaults to (tip_z, z_max); pass z_window explicitly for
    needle-less geometries where the decaying far field would otherwise win.
    Sub-cell position from a three-point quadratic through the winning cell.
    """
    if z_window is None:
        z_window = (tip_z if tip_z is not None else psi.grid.z_min, psi.grid.z_max)
    j0, j1 = _axis_window_indices(psi, z_window)
    if j1 <= j0:
        raise NoInteriorMinimum("empty axis search window")
    col = psi.values[0, :]
    vac = (
        np.ones(col.shape, dtype=bool)
        if psi.mask is None
        else (psi.mask.ids[0, :] == 0)
    )
    js = np.arange(j0, j1)
    ok = (
        vac[js]
        & vac[js - 1]
        & vac[js + 1]
        & (col[js] < col[js - 1])
        & (col[js] < col[js + 1])
    )
    candidates = js[ok]
    if candidates.size == 0:
        raise NoInteriorMinimum("no interior local minimum on the axis")
    jm = int(candidates[np.argmin(col[candidates])])
    y0, y1, y2 = col[jm - 1], col[jm], col[jm + 1]
    denom = y0 - 2.0 * y1 + y2
    dj = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
    dj = float(np.clip(dj, -0.5, 0.5))
    z_min = psi.z[jm] + dj * psi.grid.spacing
    value = y1 - 0.25 * (y0 - y2) * dj
    return MinimumInfo(
        z=float(z_min),
        value=float(value),
        above_tip=None if tip_z is None else float(z_min - tip_z),
        index=jm,
    )


def _escape_and_seeds(psi: ScalarField2D):
    vac = (
        np.ones(psi.values.shape, dtype=bool)
        if psi.mask is None
        else (psi.mask.ids == 0)
    )
    # open faces only: r = r_max and both z faces. r = 0 is the symmetry axis.
    edge = np.zeros_like(vac)
    edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    near_electrode = ndimage.binary_dilation(~vac) & vac
    escape = (edge & vac) | near_electrode
    # strict 8-neighbor local minima of Psi over vacuum, excluding escape
    # cells; the axis neighbor row is the reflection of row 1, not a copy of
    # row 0 (plain "nearest" would compare the axis against itself and
    # suppress every on-axis seed)
    v = np.where(vac, psi.values, np.inf)
    v_ext = np.vstack([v[1:2, :], v])
    shifted_min = ndimage.minimum_filter(
        v_ext,
        footprint=np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], bool),
        mode="nearest",
    )[1:, :]
    seeds = vac & ~escape & (v < shifted_min)
    return vac, escape, seeds


def trap_depth(psi: ScalarField2D, minimum: MinimumInfo, levels: int = 48):
    """Bisection on the escape level of the minimum's sublevel-set basin.

    Escape happens when the connected component of {Psi < level} containing
    the minimum first touches the domain boundary, touches an electrode, or
    merges with a different basin (another strict local minimum).
    """
    vac, escape, seeds = _escape_and_seeds(psi)
    seeds = seeds.copy()
    jm = minimum.index
    seeds[0, max(jm - 1, 0) : jm + 2] = False  # the minimum itself is not "other"
    v = psi.values
    struct = np.ones((3, 3), dtype=bool)

    def event_at(level):
        sub = vac & (v < level)
        if not sub[0, jm]:
            return None
        labels, _ = ndimage.label(sub, structure=struct)
        lab = labels[0, jm]
        comp = labels == lab
        if (comp & escape).any():
            near = ndimage.binary_dilation(~vac) & comp
            return "electrode" if near.any() else "boundary"
        if (comp & seeds).any():
            return "merge"
        return None

    lo = minimum.value
    hi = float(v[vac].max())
    if event_at(hi * (1.0 + 1e-12)) is None and event_at(hi + 1.0) is None:
        # basin never escapes below the global max: depth is the full range
        return DepthResult(
            depth=float(hi - lo), escape_level=float(hi), saddle=(0.0, minimum.z),
            event="boundary",
        )
    hi = hi * (1.0 + 1e-12)
    for _ in range(levels):
        mid = 0.5 * (lo + hi)
        if event_at(mid) is None:
            lo = mid
        else:
            hi = mid
    event = event_at(hi) or "boundary"
    # approximate saddle: cheapest cell adjacent to the still-confined basin
    sub = vac & (v < lo)
    saddle = (0.0, minimum.z)
    if sub[0, jm]:
        labels, _ = ndimage.label(sub, structure=struct)
        comp = labels == labels[0, jm]
        rim = ndimage.binary_dilation(comp) & vac & ~comp
        if rim.any():
            idx = np.unravel_index(np.argmin(np.where(rim, v, np.inf)), v.shape)
            saddle = (float(psi.r[idx[0]]), float(psi.z[idx[1]]))
    return DepthResult(
        depth=float(hi - minimum.value),
        escape_level=float(hi),
        saddle=saddle,
        event=event,
    )


def _second_derivative_5pt(vals, h_m):
    """f'' from the centered 5-point stencil; vals length 5, h in meters."""
    return (
        -vals[0] + 16.0 * vals[1] - 30.0 * vals[2] + 16.0 * vals[3] - vals[4]
    ) / (12.0 * h_m * h_m)


def secular_frequencies(psi: ScalarField2D, minimum: MinimumInfo, ion: IonSpecies):
    """(axial_hz, radial_hz) from stencil curvatures of U = Psi*e at the minimum."""
    jm = minimum.index
    if jm < 2 or jm > psi.values.shape[1] - 3:
        raise SaddleNotMinimum("minimum too close to the grid edge")
    h_m = psi.grid.spacing * 1e-3
    col = psi.values[0, jm - 2 : jm + 3] * EV
    k_ax = _second_derivative_5pt(col, h_m)
    row = psi.values[:, jm]
    radial = np.array([row[2], row[1], row[0], row[1], row[2]]) * EV
    k_rad = _second_derivative_5pt(radial, h_m)
    if k_ax <= 0 or k_rad <= 0:
        raise SaddleNotMinimum("nonpositive curvature at the candidate minimum")
    f_ax = np.sqrt(k_ax / ion.mass) / (2.0 * np.pi)
    f_rad = np.sqrt(k_rad / ion.mass) / (2.0 * np.pi)
    return float(f_ax), float(f_rad)


def solve_rf_unit(geometry: TrapGeometry, grid: GridSpec, tolerance=1e-7,
                  max_iterations=200_000):
    """Rasterize and solve the RF electrodes at 1 V, everything else grounded."""
    mask = rasterize(geometry, grid)
    bv = {}
    for name in mask.names:
        role = geometry.role_of(name)
        bv[name] = 1.0 if role == "rf" else 0.0
    if not any(v != 0.0 for v in bv.values()):
        raise ConfigError("geometry has no RF electrode")
    return solve_laplace(mask, bv, tolerance=tolerance, max_iterations=max_iterations)


def analyze_trap(
    geometry: TrapGeometry,
    grid: GridSpec,
    drive: RfDrive,
    ion: IonSpecies,
    tolerance=1e-7,
    z_window=None,
) -> TrapAnalysis:
    """Full chain: solve, pseudopotential, minimum, depth, secular frequencies."""
    fld, report = solve_rf_unit(geometry, grid, tolerance=tolerance)
    psi = pseudopotential(fld, drive, ion)
    # DC biases contribute q*Phi to the ion energy on top of Psi
    dc_names = [n for n in (psi.mask.names if psi.mask else [])
                if geometry.role_of(n) == "dc" and geometry.bias_of(n) != 0.0]
    if dc_names:
        mask = psi.mask
        for name in dc_names:
            bv = {n: (geometry.bias_of(name) if n == name else 0.0) for n in mask.names}
            dc_field, _ = solve_laplace(mask, bv, tolerance=tolerance)
            psi.values = psi.values + dc_field.values * (ion.charge / EV)
    tip = geometry.needle.tip_z if geometry.needle is not None else None
    minimum = find_minimum(psi, tip_z=tip, z_window=z_window)
    depth = trap_depth(psi, minimum)
    f_ax, f_rad = secular_frequencies(psi, minimum, ion)
    return TrapAnalysis(minimum=minimum, depth=depth, axial_hz=f_ax, radial_hz=f_rad)


@dataclass
class ScanRow:
    tip_z: float
    minimum_z: float
    above_tip: float
    depth: float
    ok: bool
    note: str = ""


@dataclass
class ScanResult:
    rows: list
    r_squared: float
    central_window: tuple
    depth_ratio_range: tuple


def needle_scan(
    geometry: TrapGeometry,
    tip_positions,
    drive: RfDrive,
    ion: IonSpecies,
    grid: Optional[GridSpec] = None,
    tolerance=1e-7,
    central_halfwidth=0.5,
) -> ScanResult:
    """Re-solve per tip position; fit minimum_z vs tip_z over the central window.

    The central window is +/- central_halfwidth around the travel midpoint;
    depth ratios are taken against the point nearest the midpoint. Points
    where no interior minimum exists are kept in the table but marked.
    """
    if geometry.needle is None:
        raise ConfigError("needle_scan requires a needle")
    if grid is None:
        grid = GridSpec(spacing=0.020)
    rows = []
    for tip in tip_positions:
        g = geometry.with_tip(float(tip))
        try:
            analysis = analyze_trap(g, grid, drive, ion, tolerance=tolerance)
            rows.append(
                ScanRow(
                    tip_z=float(tip),
                    minimum_z=analysis.minimum.z,
                    above_tip=analysis.minimum.above_tip,
                    depth=analysis.depth.depth,
                    ok=True,
                )
            )
        except NoInteriorMinimum as exc:
            rows.append(
                ScanRow(
                    tip_z=float(tip), minimum_z=np.nan, above_tip=np.nan,
                    depth=np.nan, ok=False, note=str(exc),
                )
            )
    lo, hi = geometry.needle.travel_range
    mid = 0.5 * (lo + hi)
    window = (mid - central_halfwidth, mid + central_halfwidth)
    good = [r for r in rows if r.ok and window[0] <= r.tip_z <= window[1]]
    if len(good) >= 3:
        x = np.array([r.tip_z for r in good])
        y = np.array([r.minimum_z for r in good])
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
        center = min(good, key=lambda r: abs(r.tip_z - mid))
        ratios = np.array([r.depth for r in good]) / center.depth
        ratio_range = (float(ratios.min()), float(ratios.max()))
    else:
        r2 = float("nan")
        ratio_range = (float("nan"), float("nan"))
    return ScanResult(
        rows=rows, r_squared=float(r2), central_window=window,
        depth_ratio_range=ratio_range,
    )
