"""Axisymmetric Laplace solver on a uniform (r, z) grid.

Red-black successive over-relaxation with the cylindrical five-point stencil,
a regularized stencil on the axis column, and omega from the uniform-grid
Jacobi spectral-radius estimate. Outer box faces are grounded by default;
individual faces can instead be mirrored (zero normal derivative) which the
analytic benchmarks (parallel plates, coaxial cylinders) rely on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit, prange

from .errors import ConfigError, IoError, MissingBoundaryValue
from .geometry import ElectrodeMask, GridSpec

FACE_GROUNDED = 0
FACE_MIRROR = 1

_MAGIC = b"TTFLD1\x00\x00"


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    tolerance: float


@dataclass
class ScalarField2D:
    """Scalar samples on a GridSpec; unit is 'V' or 'eV'."""

    values: np.ndarray
    grid: GridSpec
    mask: Optional[ElectrodeMask] = None
    unit: str = "V"

    @property
    def r(self):
        return self.grid.r

    @property
    def z(self):
        return self.grid.z

    def save_binary(self, path):
        """Little-endian dump: magic, nr, nz (int64), spacing, r0, z0 (float64),
        then nr*nz float64 values in row-major (r-major) order."""
        try:
            with open(path, "wb") as f:
                f.write(_MAGIC)
                f.write(struct.pack("<qq", *self.values.shape))
                f.write(struct.pack("<ddd", self.grid.spacing, 0.0, self.grid.z_min))
                f.write(self.values.astype("<f8").tobytes())
        except OSError as exc:
            raise IoError(str(exc)) from exc

    @classmethod
    def load_binary(cls, path):
        try:
            with open(path, "rb") as f:
                if f.read(8) != _MAGIC:
                    raise IoError(f"{path}: not a field dump")
                nr, nz = struct.unpack("<qq", f.read(16))
                spacing, _r0, z0 = struct.unpack("<ddd", f.read(24))
                data = np.frombuffer(f.read(nr * nz * 8), dtype="<f8")
        except OSError as exc:
            raise IoError(str(exc)) from exc
        grid = GridSpec(
            r_max=(nr - 1) * spacing,
            z_min=z0,
            z_max=z0 + (nz - 1) * spacing,
            spacing=spacing,
        )
        return cls(values=data.reshape(nr, nz).copy(), grid=grid)


@njit(parallel=True, cache=True)
def _sor_sweep(phi, fixed, omega, parity, rowdelta, m_rmax, m_zmin, m_zmax):
    nr, nz = phi.shape
    for i in prange(nr):
        local = 0.0
        for j in range(nz):
            if (i + j) % 2 != parity or fixed[i, j]:
                continue
            jm = j - 1
            jp = j + 1
            if j == 0:
                if m_zmin == 1:
                    jm = 1
                else:
                    continue
            if j == nz - 1:
                if m_zmax == 1:
                    jp = nz - 2
                else:
                    continue
            if i == 0:
                new = (4.0 * phi[1, j] + phi[0, jm] + phi[0, jp]) / 6.0
            elif i == nr - 1:
                if m_rmax != 1:
                    continue
                # mirrored outer face: both radial neighbors collapse to i-1
                new = (2.0 * phi[i - 1, j] + phi[i, jm] + phi[i, jp]) / 4.0
            else:
                cr = 0.5 / i
                new = (
                    (1.0 + cr) * phi[i + 1, j]
                    + (1.0 - cr) * phi[i - 1, j]
                    + phi[i, jm]
                    + phi[i, jp]
                ) / 4.0
            upd = phi[i, j] + omega * (new - phi[i, j])
            d = abs(upd - phi[i, j])
            if d > local:
                local = d
            phi[i, j] = upd
        rowdelta[i] = local


def solve_laplace(
    mask: ElectrodeMask,
    boundary_values: dict,
    tolerance: float = 1e-7,
    max_iterations: int = 200_000,
    faces: tuple = (FACE_GROUNDED, FACE_GROUNDED, FACE_GROUNDED),
):
    """Solve Laplace on vacuum cells with electrodes at fixed voltages.

    boundary_values maps every electrode name in the mask to volts. faces are
    the (r_max, z_min, z_max) box-face treatments; grounded faces are held at
    0 V unless an electrode claims the cell. Returns best-effort field plus a
    report; report.converged is False when max_iterations was hit.
    """
    for name in mask.names:
        if name not in boundary_values:
            raise MissingBoundaryValue(f"no boundary value for electrode {name!r}")
    if tolerance <= 0:
        raise ConfigError("tolerance must be positive")

    grid = mask.grid
    nr, nz = grid.nr, grid.nz
    phi = np.zeros((nr, nz), dtype=np.float64)
    fixed = mask.ids > 0
    for idx, name in enumerate(mask.names, start=1):
        phi[mask.ids == idx] = boundary_values[name]

    f_rmax, f_zmin, f_zmax = faces
    fixed = fixed.copy()
    if f_rmax == FACE_GROUNDED:
        fixed[-1, :] = True
    if f_zmin == FACE_GROUNDED:
        fixed[:, 0] = True
    if f_zmax == FACE_GROUNDED:
        fixed[:, -1] = True

    scale = max(max(abs(v) for v in boundary_values.values()), 1e-300)
    rho_j = (np.cos(np.pi / nr) + np.cos(np.pi / nz)) / 2.0
    omega = 2.0 / (1.0 + np.sqrt(1.0 - rho_j * rho_j))
    rowdelta = np.zeros(nr)

    iterations = 0
    residual = np.inf
    for it in range(1, max_iterations + 1):
        _sor_sweep(phi, fixed, omega, 0, rowdelta, f_rmax, f_zmin, f_zmax)
        d0 = rowdelta.max()
        _sor_sweep(phi, fixed, omega, 1, rowdelta, f_rmax, f_zmin, f_zmax)
        d1 = rowdelta.max()
        iterations = it
        residual = max(d0, d1) / scale
        if residual < tolerance:
            break
    converged = residual < tolerance
    report = SolveReport(
        iterations=iterations,
        final_residual=float(residual),
        converged=bool(converged),
        tolerance=tolerance,
    )
    return ScalarField2D(values=phi, grid=grid, mask=mask, unit="V"), report


def unit_potentials(mask: ElectrodeMask, names=None, **solve_kw):
    """Solve once per electrode at 1 V (others 0); superpose downstream."""
    out = {}
    for name in names if names is not None else mask.names:
        bv = {n: (1.0 if n == name else 0.0) for n in mask.names}
        out[name] = solve_laplace(mask, bv, **solve_kw)
    return out


def superpose(fields_weights):
    """Weighted sum of unit-drive fields sharing one grid."""
    items = list(fields_weights)
    if not items:
        raise ConfigError("superpose requires at least one field")
    base, w0 = items[0]
    values = base.values * w0
    for fld, w in items[1:]:
        if fld.values.shape != values.shape:
            raise ConfigError("superpose requires identical grids")
        values = values + fld.values * w
    return ScalarField2D(values=values, grid=base.grid, mask=base.mask, unit="V")


def gradient(fld: ScalarField2D):
    """Electric field (E_r, E_z) in V/m from -grad(potential).

    Central differences in the interior, one-sided at edges; E_r on the axis
    is identically zero by symmetry.
    """
    h_m = fld.grid.spacing * 1e-3
    dphi_dr = np.gradient(fld.values, h_m, axis=0)
    dphi_dz = np.gradient(fld.values, h_m, axis=1)
    er = -dphi_dr
    ez = -dphi_dz
    er[0, :] = 0.0
    return er, ez


def write_field_csv(fld: ScalarField2D, path, stride: int = 1):
    """CSV rows (r_mm, z_mm, value); stride subsamples both axes."""
    r = fld.r[::stride]
    z = fld.z[::stride]
    vals = fld.values[::stride, ::stride]
    try:
        with open(path, "w") as f:
            f.write(f"r_mm,z_mm,value_{fld.unit}\n")
            for i, rv in enumerate(r):
                for j, zv in enumerate(z):
                    f.write(f"{rv:.12g},{zv:.12g},{vals[i, j]:.12g}\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
