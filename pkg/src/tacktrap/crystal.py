"""Coulomb crystal equilibria in harmonic or gridded trap potentials.

Positions are Cartesian (x, y, z) in meters with z the trap axis. The
minimizer works in dimensionless coordinates scaled by the equilibrium
length l = (k_e q^2 / (m omega_r^2))^(1/3), which keeps BFGS well
conditioned for any ion species and frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import minimize

from .constants import COULOMB_CONSTANT, EV
from .errors import ConfigError, NoConvergence, OverlappingIons
from .pseudo import IonSpecies, ScalarField2D, find_minimum

_MIN_SEPARATION = 1e-12  # m


@dataclass
class CrystalConfig:
    positions: np.ndarray   # (n, 3) m
    energy: float           # J
    converged: bool
    gradient_norm: float    # max |dU/dx| in N


class HarmonicTrap:
    """U = m/2 (omega_r^2 (x^2+y^2) + omega_z^2 z^2)."""

    def __init__(self, axial_hz, radial_hz):
        if axial_hz <= 0 or radial_hz <= 0:
            raise ConfigError("harmonic trap frequencies must be positive")
        self.axial_hz = axial_hz
        self.radial_hz = radial_hz

    def length_scale(self, ion):
        w_r = 2.0 * np.pi * self.radial_hz
        return (COULOMB_CONSTANT * ion.charge**2 / (ion.mass * w_r**2)) ** (1.0 / 3.0)

    def two_ion_spacing(self, ion):
        """Closed-form pair separation; the pair sits along the weakest axis."""
        w = 2.0 * np.pi * min(self.axial_hz, self.radial_hz)
        return (2.0 * COULOMB_CONSTANT * ion.charge**2 / (ion.mass * w**2)) ** (
            1.0 / 3.0
        )

    def center(self):
        return np.zeros(3)

    def u_and_grad(self, positions, ion):
        w_r = 2.0 * np.pi * self.radial_hz
        w_z = 2.0 * np.pi * self.axial_hz
        kx = ion.mass * w_r**2
        kz = ion.mass * w_z**2
        x, y, z = positions[:, 0], positions[:, 1], positions[:, 2]
        u = 0.5 * (kx * (x * x + y * y) + kz * z * z).sum()
        grad = np.empty_like(positions)
        grad[:, 0] = kx * x
        grad[:, 1] = kx * y
        grad[:, 2] = kz * z
        return u, grad


class GriddedTrap:
    """Trap energy interpolated from a pseudopotential field (eV grid).

    The field is mirrored across r = 0 before spline fitting so radial
    derivatives vanish on the axis. Outside the gridded domain the energy
    continues as a steep quadratic wall, so line-search probes past the
    edge are pushed back instead of failing.
    """

    def __init__(self, psi: ScalarField2D, pad_cells: int = 6,
                 center_z: float | None = None):
        if psi.unit != "eV":
            raise ConfigError("GriddedTrap expects a pseudopotential in eV")
        self.psi = psi
        r_mm = psi.r
        z_mm = psi.z
        vals = psi.values
        if psi.mask is not None and psi.mask.electrode.any():
            # the raw grid holds ~0 inside conductors; continue electrode
            # interiors with their nearest vacuum value so the spline has no
            # spurious attractive basins there
            idx = ndimage.distance_transform_edt(
                psi.mask.electrode, return_distances=False, return_indices=True
            )
            vals = vals[tuple(idx)]
        k = min(pad_cells, len(r_mm) - 1)
        r_ext = np.concatenate([-r_mm[k:0:-1], r_mm])
        stacked = np.vstack([vals[k:0:-1, :], vals])
        self._spline = RectBivariateSpline(
            r_ext * 1e-3, z_mm * 1e-3, stacked, kx=3, ky=3
        )
        self._r_max = r_mm[-1] * 1e-3
        self._z_lim = (z_mm[0] * 1e-3, z_mm[-1] * 1e-3)
        # wall stiffness: ~100 eV one grid cell past the edge, far steeper
        # than any pseudopotential slope so the edge always repels
        h = psi.grid.spacing * 1e-3
        self._wall = 100.0 * EV / (h * h)
        if center_z is None:
            center_z = find_minimum(psi).z
        self._center_z = center_z * 1e-3

    def center(self):
        return np.array([0.0, 0.0, self._center_z])

    def length_scale(self, ion):
        h = self.psi.grid.spacing * 1e-3
        jm = int(round((self._center_z - self._z_lim[0]) / h))
        col = self.psi.values[0, jm - 2 : jm + 3] * EV
        k_ax = (-col[0] + 16 * col[1] - 30 * col[2] + 16 * col[3] - col[4]) / (
            12 * h * h
        )
        k_ax = max(k_ax, 1e-30)
        w = np.sqrt(k_ax / ion.mass)
        return (COULOMB_CONSTANT * ion.charge**2 / (ion.mass * w**2)) ** (1.0 / 3.0)

    def u_and_grad(self, positions, ion):
        x, y, z = positions[:, 0], positions[:, 1], positions[:, 2]
        rho = np.hypot(x, y)
        rho_c = np.minimum(rho, self._r_max)
        z_c = np.clip(z, self._z_lim[0], self._z_lim[1])
        dr = rho - rho_c
        dz = z - z_c
        u_ev = self._spline.ev(rho_c, z_c)
        du_drho = self._spline.ev(rho_c, z_c, dx=1)
        du_dz = self._spline.ev(rho_c, z_c, dy=1)
        u = float(u_ev.sum() * EV) + float(self._wall * (dr * dr + dz * dz).sum())
        grad = np.empty_like(positions)
        safe = np.where(rho > 0, rho, 1.0)
        f_rho = EV * du_drho + 2.0 * self._wall * dr
        grad[:, 0] = f_rho * np.where(rho > 0, x / safe, 0.0)
        grad[:, 1] = f_rho * np.where(rho > 0, y / safe, 0.0)
        grad[:, 2] = EV * du_dz + 2.0 * self._wall * dz
        return u, grad


def total_energy(positions, trap, ion: IonSpecies):
    """Trap energy plus pairwise Coulomb repulsion, joules."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    u, _ = trap.u_and_grad(positions, ion)
    n = len(positions)
    kq2 = COULOMB_CONSTANT * ion.charge**2
    for i in range(n):
        d = positions[i + 1 :] - positions[i]
        dist = np.sqrt((d * d).sum(axis=1))
        if np.any(dist < _MIN_SEPARATION):
            raise OverlappingIons("two ions closer than 1 pm")
        u += kq2 * (1.0 / dist).sum()
    return float(u)


def _energy_grad(positions, trap, ion):
    u, grad = trap.u_and_grad(positions, ion)
    kq2 = COULOMB_CONSTANT * ion.charge**2
    n = len(positions)
    for i in range(n):
        d = positions[i + 1 :] - positions[i]
        dist2 = (d * d).sum(axis=1)
        dist = np.sqrt(dist2)
        if np.any(dist < _MIN_SEPARATION):
            raise OverlappingIons("two ions closer than 1 pm")
        u += kq2 * (1.0 / dist).sum()
        f = kq2 * d / (dist2 * dist)[:, None]
        grad[i] += f.sum(axis=0)
        grad[i + 1 :] -= f
    return u, grad


def _canonical_orientation(positions):
    """Rotate about z so the outermost ion sits on +x; stabilizes goldens."""
    pos = positions.copy()
    rho = np.hypot(pos[:, 0], pos[:, 1])
    if rho.max() < 1e-15:
        return pos
    k = int(np.argmax(rho))
    ang = np.arctan2(pos[k, 1], pos[k, 0])
    ca, sa = np.cos(-ang), np.sin(-ang)
    x = pos[:, 0] * ca - pos[:, 1] * sa
    y = pos[:, 0] * sa + pos[:, 1] * ca
    pos[:, 0], pos[:, 1] = x, y
    return pos


def relax(
    n_ions: int,
    trap,
    ion: IonSpecies = IonSpecies(),
    restarts: int = 8,
    tolerance: float = 1e-18,
    seed: int = 0,
) -> CrystalConfig:
    """Lowest-energy converged configuration over seeded random restarts.

    tolerance is the max net force component (newtons) at convergence.
    Restart seeds are drawn from a ball of a few equilibrium lengths around
    the trap center; ties in energy break lexicographically on positions.
    """
    if n_ions < 1:
        raise ConfigError("n_ions must be >= 1")
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    scale = trap.length_scale(ion)
    e0 = COULOMB_CONSTANT * ion.charge**2 / scale
    center = trap.center()
    rng = np.random.default_rng(seed)

    def objective(flat):
        pos = center + flat.reshape(-1, 3) * scale
        u, grad = _energy_grad(pos, trap, ion)
        return u / e0, grad.ravel() * (scale / e0)

    candidates = []
    ball = max(1.0, n_ions ** (1.0 / 3.0)) * 1.5
    for _ in range(restarts):
        x0 = rng.uniform(-ball, ball, size=3 * n_ions)
        res = minimize(
            objective,
            x0,
            jac=True,
            method="BFGS",
            options={"gtol": 1e-12, "maxiter": 20_000},
        )
        pos = center + res.x.reshape(-1, 3) * scale
        _, grad = _energy_grad(pos, trap, ion)
        gmax = float(np.abs(grad).max())
        if gmax <= tolerance:
            u = total_energy(pos, trap, ion)
            candidates.append((u, pos, gmax))
    if not candidates:
        raise NoConvergence(f"no restart reached force tolerance {tolerance} N")
    e_min = min(c[0] for c in candidates)
    band = 1e-12 * abs(e_min) + 1e-300
    tied = [c for c in candidates if c[0] <= e_min + band]
    tied.sort(
        key=lambda c: tuple(np.round(_canonical_orientation(c[1]).ravel() / scale, 6))
    )
    u, pos, gmax = tied[0]
    return CrystalConfig(
        positions=_canonical_orientation(pos),
        energy=u,
        converged=True,
        gradient_norm=gmax,
    )


def classify(config: CrystalConfig):
    """Planarity (z_rms / rho_rms) and per-ring ion counts."""
    pos = config.positions - config.positions.mean(axis=0)
    rho = np.hypot(pos[:, 0], pos[:, 1])
    z_rms = float(np.sqrt((pos[:, 2] ** 2).mean()))
    rho_rms = float(np.sqrt((rho**2).mean()))
    planarity = 0.0 if rho_rms == 0 else z_rms / rho_rms
    order = np.argsort(rho)
    sorted_rho = rho[order]
    shells = []
    if len(sorted_rho):
        gap = max(0.2 * sorted_rho[-1], 1e-15)
        count = 1
        for a, b in zip(sorted_rho, sorted_rho[1:]):
            if b - a > gap:
                shells.append(count)
                count = 1
            else:
                count += 1
        shells.append(count)
    return {"planarity": planarity, "shells": shells}


def write_positions_csv(config: CrystalConfig, path):
    with open(path, "w") as f:
        f.write("index,x_m,y_m,z_m\n")
        for i, p in enumerate(config.positions):
            f.write(f"{i},{p[0]:.12g},{p[1]:.12g},{p[2]:.12g}\n")
