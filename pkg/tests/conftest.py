"""Shared fixtures: the expensive solves run once per session."""

import numpy as np
import pytest

from tacktrap import corrector, pseudo, rays
from tacktrap.config import (
    build_drive,
    build_geometry,
    build_grid,
    build_ion,
    load_config,
)
from tacktrap.geometry import GridSpec, MirrorSegment, MirrorSpec, TrapGeometry


@pytest.fixture(scope="session")
def default_config():
    return load_config()


@pytest.fixture(scope="session")
def production(default_config):
    """Full-resolution solve of the default trap, shared by all gates."""
    cfg = default_config
    geometry = build_geometry(cfg)
    grid = build_grid(cfg)
    drive = build_drive(cfg)
    ion = build_ion(cfg)
    fld, report = pseudo.solve_rf_unit(geometry, grid, tolerance=cfg["solver"]["tolerance"])
    psi = pseudo.pseudopotential(fld, drive, ion)
    minimum = pseudo.find_minimum(psi, tip_z=geometry.needle.tip_z)
    depth = pseudo.trap_depth(psi, minimum)
    axial_hz, radial_hz = pseudo.secular_frequencies(psi, minimum, ion)
    return {
        "geometry": geometry,
        "grid": grid,
        "drive": drive,
        "ion": ion,
        "field": fld,
        "report": report,
        "psi": psi,
        "minimum": minimum,
        "depth": depth,
        "axial_hz": axial_hz,
        "radial_hz": radial_hz,
    }


@pytest.fixture(scope="session")
def scan(default_config):
    cfg = default_config
    geometry = build_geometry(cfg)
    drive = build_drive(cfg)
    ion = build_ion(cfg)
    s = cfg["scan"]
    tips = np.linspace(s["start"], s["stop"], int(s["points"]))
    grid = GridSpec(
        r_max=cfg["grid"]["r_max"],
        z_min=cfg["grid"]["z_min"],
        z_max=cfg["grid"]["z_max"],
        spacing=s["spacing"],
    )
    return pseudo.needle_scan(geometry, tips, drive, ion, grid=grid)


@pytest.fixture(scope="session")
def corrector_spec():
    return corrector.CorrectorDesignSpec()


@pytest.fixture(scope="session")
def corrector_profile(corrector_spec):
    return corrector.design(corrector_spec)


@pytest.fixture(scope="session")
def corrector_report(corrector_profile, corrector_spec):
    return corrector.verify(corrector_profile, corrector_spec)


@pytest.fixture(scope="session")
def mirror_focus():
    """Mirror-only bundle from the nominal ion position, at best focus."""
    mirror = MirrorSpec()
    stack = rays.SurfaceStack([rays.ConicMirrorElement(rays.mirror_surface(mirror))])
    bundle = rays.trace_bundle(
        np.array([0.0, 0.0, 2.25e-3]),
        stack,
        20000,
        np.radians(71.0),
        min_polar_angle=np.radians(11.0),
    )
    z, diag = rays.best_focus(bundle, 2e-3, 0.2)
    return {"mirror": mirror, "bundle": bundle, "z": z, "spot": diag}


@pytest.fixture(scope="session")
def segmented_nulls():
    """RF null heights for the segmented ellipsoidal mirror variant."""
    mirror = MirrorSpec(
        radius_of_curvature=1.0,
        aperture_radius=1.2,
        hole_radius=0.0,
        conic_constant=-0.5,
    )
    cap = mirror.cap_height
    grid = GridSpec(r_max=2.0, z_min=-0.1, z_max=2.5, spacing=0.005)
    drive = pseudo.RfDrive()
    ion = pseudo.IonSpecies()
    bands = [(0.0, 0.3), (0.3, 0.6), (0.6, cap)]

    def null_z(rf_bands):
        segs = tuple(
            MirrorSegment(lo, hi, role="rf" if i in rf_bands else "ground")
            for i, (lo, hi) in enumerate(bands)
        )
        geom = TrapGeometry(
            mirror=mirror,
            needle=None,
            ring=None,
            plate=None,
            chamber_radius=2.0,
            roles={},
            mirror_segments=segs,
        )
        fld, _ = pseudo.solve_rf_unit(geom, grid)
        psi = pseudo.pseudopotential(fld, drive, ion)
        # the null can sit inside the bowl, so search from just above the vertex
        return pseudo.find_minimum(psi, z_window=(0.02, 2.2)).z

    return {"top_only": null_z({2}), "upper_two": null_z({1, 2})}
