"""Laplace solver benchmarks with closed-form solutions, plus field I/O."""

import numpy as np
import pytest

from tacktrap.errors import IoError, MissingBoundaryValue
from tacktrap.field import (
    FACE_GROUNDED,
    FACE_MIRROR,
    ScalarField2D,
    gradient,
    solve_laplace,
    superpose,
    unit_potentials,
    write_field_csv,
)
from tacktrap.geometry import ElectrodeMask, GridSpec


def plates_mask(spacing=0.01):
    """Two parallel plates normal to z; exact potential is linear in z."""
    grid = GridSpec(r_max=0.2, z_min=0.0, z_max=1.0, spacing=spacing)
    ids = np.zeros((grid.nr, grid.nz), dtype=np.int16)
    ids[:, 0] = 1
    ids[:, -1] = 2
    return ElectrodeMask(ids=ids, names=("bottom", "top"), grid=grid)


def coax_mask(spacing):
    """Coaxial capacitor: solid core to r=1, outer shell from r=2.4.

    Both radii are grid-aligned at 20 and 40 um so refinement compares the
    same continuum problem.
    """
    grid = GridSpec(r_max=3.0, z_min=0.0, z_max=0.2, spacing=spacing)
    ids = np.zeros((grid.nr, grid.nz), dtype=np.int16)
    r = grid.r
    ids[r <= 1.0 + 1e-12, :] = 1
    ids[r >= 2.4 - 1e-12, :] = 2
    return ElectrodeMask(ids=ids, names=("inner", "outer"), grid=grid)


def coax_error(spacing):
    mask = coax_mask(spacing)
    fld, report = solve_laplace(
        mask,
        {"inner": 1.0, "outer": 0.0},
        tolerance=1e-9,
        faces=(FACE_GROUNDED, FACE_MIRROR, FACE_MIRROR),
    )
    assert report.converged
    r = fld.grid.r
    vac = mask.ids[:, 0] == 0
    exact = np.log(2.4 / r[vac]) / np.log(2.4 / 1.0)
    mid = fld.values[vac, fld.grid.nz // 2]
    return float(np.max(np.abs(mid - exact)))


class TestBenchmarks:
    def test_parallel_plates_linear(self):
        mask = plates_mask()
        fld, report = solve_laplace(
            mask,
            {"bottom": 0.0, "top": 1.0},
            tolerance=1e-9,
            faces=(FACE_MIRROR, FACE_GROUNDED, FACE_GROUNDED),
        )
        assert report.converged
        exact = (fld.grid.z - fld.grid.z_min) / (fld.grid.z_max - fld.grid.z_min)
        err = np.abs(fld.values - exact[None, :]).max()
        assert err < 1e-6

    def test_coax_log_profile(self):
        assert coax_error(0.02) < 1e-3

    def test_coax_second_order_refinement(self):
        ratio = coax_error(0.04) / coax_error(0.02)
        assert 2.8 < ratio < 5.5

    def test_max_principle(self):
        mask = coax_mask(0.02)
        fld, _ = solve_laplace(
            mask,
            {"inner": 1.0, "outer": 0.0},
            tolerance=1e-9,
            faces=(FACE_GROUNDED, FACE_MIRROR, FACE_MIRROR),
        )
        assert fld.values.min() >= -1e-9
        assert fld.values.max() <= 1.0 + 1e-9

    def test_superposition(self):
        mask = plates_mask(spacing=0.02)
        kw = dict(tolerance=1e-10, faces=(FACE_MIRROR, FACE_GROUNDED, FACE_GROUNDED))
        units = unit_potentials(mask, **kw)
        combo = superpose(
            [(units["bottom"][0], 0.3), (units["top"][0], -0.7)]
        )
        direct, _ = solve_laplace(mask, {"bottom": 0.3, "top": -0.7}, **kw)
        assert np.abs(combo.values - direct.values).max() < 5e-7

    def test_missing_boundary_value(self):
        mask = plates_mask(spacing=0.02)
        with pytest.raises(MissingBoundaryValue):
            solve_laplace(mask, {"bottom": 0.0})


class TestGradient:
    def test_quadrupole_gradient(self):
        grid = GridSpec(r_max=1.0, z_min=-1.0, z_max=1.0, spacing=0.05)
        rr = grid.r[:, None]
        zz = grid.z[None, :]
        fld = ScalarField2D(values=zz**2 - rr**2 / 2.0 + 0.0 * rr, grid=grid)
        e_r, e_z = gradient(fld)
        # central differences are exact on a quadratic; edges are one-sided
        exact_z = -2000.0 * (zz + 0.0 * rr)
        exact_r = 1000.0 * (rr + 0.0 * zz)
        assert np.allclose(e_z[:, 1:-1], exact_z[:, 1:-1], atol=1e-8)
        assert np.allclose(e_r[1:-1, :], exact_r[1:-1, :], atol=1e-8)
        assert np.all(e_r[0, :] == 0.0)


class TestFieldIo:
    def test_binary_round_trip(self, tmp_path):
        grid = GridSpec(r_max=0.5, z_min=0.0, z_max=0.5, spacing=0.05)
        values = np.arange(grid.nr * grid.nz, dtype=float).reshape(grid.nr, grid.nz)
        fld = ScalarField2D(values=values, grid=grid)
        path = tmp_path / "fld.bin"
        fld.save_binary(path)
        back = ScalarField2D.load_binary(path)
        assert np.array_equal(back.values, values)
        assert back.grid.spacing == grid.spacing
        assert back.grid.z_min == grid.z_min

    def test_binary_magic_checked(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a field dump at all")
        with pytest.raises(IoError):
            ScalarField2D.load_binary(path)

    def test_csv_stride(self, tmp_path):
        grid = GridSpec(r_max=0.5, z_min=0.0, z_max=0.5, spacing=0.05)
        fld = ScalarField2D(values=np.ones((grid.nr, grid.nz)), grid=grid)
        path = tmp_path / "fld.csv"
        write_field_csv(fld, path, stride=2)
        lines = path.read_text().strip().splitlines()
        n_r = len(grid.r[::2])
        n_z = len(grid.z[::2])
        assert lines[0].startswith("r_mm")
        assert len(lines) == 1 + n_r * n_z
