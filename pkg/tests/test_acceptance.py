"""Headline acceptance gates. Each test prints one pass/fail line with the
measured value and the tolerance it is held to."""

import time

import numpy as np

from tacktrap.collect import (
    EmissionModel,
    dipole_cap_fraction,
    na_equivalent,
    solid_angle,
)
from tacktrap.corrector import CorrectorDesignSpec, design, verify
from tacktrap.crystal import COULOMB_CONSTANT, HarmonicTrap, classify, relax
from tacktrap.errors import TotalInternalReflection
from tacktrap.geometry import MirrorSpec
from tacktrap.pseudo import IonSpecies, RfDrive, pseudopotential
from tacktrap.rays import Ray, refract

from test_corrector import retro_case_spec, retro_closed_form
from test_field import coax_error
from test_pseudo import quadrupole_field


def _gate(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"criterion {num:02d} {status}  {name}: {detail}")
    assert ok, f"criterion {num:02d} {name}: {detail}"


def test_criterion_01_solid_angle_from_focus():
    t0 = time.perf_counter()
    res = solid_angle(2.0, MirrorSpec(), mode="quadrature", n_samples=200001)
    elapsed = time.perf_counter() - t0
    f = res["geometric_fraction"]
    ok = abs(f - 0.386) <= 0.005 and elapsed < 1.0
    _gate(1, "solid angle from focus",
          ok, f"fraction={f:.6f} vs 0.386+/-0.005, {elapsed:.3f} s (< 1 s)")


def test_criterion_02_solid_angle_displaced():
    t0 = time.perf_counter()
    res = solid_angle(2.25, MirrorSpec(), mode="quadrature", n_samples=200001)
    elapsed = time.perf_counter() - t0
    f = res["geometric_fraction"]
    ok = abs(f - 0.350) <= 0.005 and elapsed < 1.0
    _gate(2, "solid angle from focus + 0.25 mm",
          ok, f"fraction={f:.6f} vs 0.350+/-0.005, {elapsed:.3f} s (< 1 s)")


def test_criterion_03_na_equivalence():
    res = na_equivalent(0.24)
    ok = abs(res["omega_sr"] - 3.0) <= 0.1 and abs(res["na"] - 0.85) <= 0.01
    _gate(3, "NA equivalence of fraction 0.24",
          ok, f"omega={res['omega_sr']:.4f} sr vs 3.0+/-0.1, "
              f"NA={res['na']:.4f} vs 0.85+/-0.01")


def test_criterion_04_ion_position(production):
    above = production["minimum"].above_tip
    ok = 0.55 * 0.85 <= above <= 0.55 * 1.15
    _gate(4, "pseudopotential minimum above needle tip",
          ok, f"{above:.4f} mm vs 0.55 mm +/-15% [0.4675, 0.6325]")


def test_criterion_05_trap_depth(production):
    depth = production["depth"].depth
    ok = 0.025 <= depth <= 0.100
    _gate(5, "trap depth",
          ok, f"{depth * 1e3:.3f} meV vs 0.05 eV within factor 2 "
              f"[25, 100] meV (escape: {production['depth'].event})")


def test_criterion_06_secular_structure(production):
    ax, rad = production["axial_hz"], production["radial_hz"]
    ratio = ax / rad
    ok = ax > rad and 2.1 * 0.7 <= ratio <= 2.1 * 1.3
    _gate(6, "secular frequency structure",
          ok, f"axial={ax / 1e3:.1f} kHz > radial={rad / 1e3:.1f} kHz, "
              f"ratio={ratio:.3f} vs 2.1+/-30% [1.47, 2.73]")


def test_criterion_07_needle_scan(scan):
    lo, hi = scan.depth_ratio_range
    ok = scan.r_squared > 0.99 and 0.5 <= lo and hi <= 1.5
    _gate(7, "needle scan linearity",
          ok, f"R^2={scan.r_squared:.7f} (> 0.99) over central "
              f"{scan.central_window[1] - scan.central_window[0]:.1f} mm, "
              f"depth ratios [{lo:.3f}, {hi:.3f}] within [0.5, 1.5]")


def test_criterion_08_crystal():
    t0 = time.perf_counter()
    trap = HarmonicTrap(axial_hz=420e3, radial_hz=200e3)
    ion = IonSpecies()
    seven = relax(7, trap, ion)
    shape = classify(seven)
    pair = relax(2, trap, ion, restarts=4)
    elapsed = time.perf_counter() - t0
    sep = np.linalg.norm(pair.positions[1] - pair.positions[0])
    omega = 2.0 * np.pi * 200e3
    closed = (2.0 * COULOMB_CONSTANT * ion.charge**2 / (ion.mass * omega**2)) ** (1 / 3)
    rel_err = abs(sep - closed) / closed
    ok = (shape["shells"] == [1, 6] and shape["planarity"] < 0.05
          and rel_err < 1e-3 and elapsed < 10.0)
    _gate(8, "coulomb crystal structure",
          ok, f"7-ion shells={shape['shells']} (want [1, 6]), "
              f"planarity={shape['planarity']:.2e} (< 0.05), "
              f"2-ion spacing err={rel_err:.2e} (< 1e-3), "
              f"{elapsed:.1f} s (< 10 s)")


def test_criterion_09_corrector():
    t0 = time.perf_counter()
    spec = CorrectorDesignSpec()
    report = verify(design(spec), spec)
    retro_spec = retro_case_spec()
    retro_profile = design(retro_spec)
    u = np.linspace(retro_spec.min_emission_angle, retro_spec.max_emission_angle,
                    len(retro_profile.r))
    _, z_exact = retro_closed_form(u, retro_spec)
    sag_err = float(np.max(np.abs(retro_profile.z - z_exact)))
    elapsed = time.perf_counter() - t0
    ok = (report.direction_spread <= 1e-4
          and report.ion_referred_rms <= 1.15e-6
          and sag_err < 1e-6
          and elapsed < 30.0)
    _gate(9, "aspheric corrector",
          ok, f"direction spread={report.direction_spread:.2e} rad (<= 1e-4), "
              f"ion-referred rms={report.ion_referred_rms * 1e6:.2e} um (<= 1.15), "
              f"retro-case sag err={sag_err * 1e6:.2e} um (< 1), "
              f"{elapsed:.1f} s (< 30 s)")


def test_criterion_10_uncorrected_contrast(mirror_focus):
    diag = mirror_focus["spot"]
    radii = np.hypot(diag.hits[:, 0] - diag.centroid[0],
                     diag.hits[:, 1] - diag.centroid[1])
    fraction = float(np.mean(radii <= 8.0 * 10e-6))
    ok = fraction < 0.20
    _gate(10, "uncorrected mirror blur",
          ok, f"{fraction * 100:.2f}% of rays within 10 um (ion-referred) of "
              f"centroid at best focus z={mirror_focus['z'] * 1e3:.3f} mm (< 20%)")


def test_criterion_11_segmented_variant(segmented_nulls):
    top, two = segmented_nulls["top_only"], segmented_nulls["upper_two"]
    ok = top > two
    _gate(11, "segmented-mirror trapping zone",
          ok, f"top-band-only null z={top:.4f} mm strictly above "
              f"upper-two-bands z={two:.4f} mm (delta={top - two:.4f} mm)")


def test_criterion_12_property_suites():
    # field solver: coaxial closed form and second-order refinement
    err20 = coax_error(0.02)
    err40 = coax_error(0.04)
    field_ok = err20 < 1e-3 and err40 / err20 > 2.5

    # pseudopotential scaling laws
    fld = quadrupole_field(spacing=0.05)
    ion = IonSpecies()
    base = pseudopotential(fld, RfDrive(), ion).values[1:, :]
    v2 = pseudopotential(fld, RfDrive(amplitude=540.0), ion).values[1:, :]
    w2 = pseudopotential(fld, RfDrive(frequency=46e6), ion).values[1:, :]
    scale_ok = (np.max(np.abs(v2 / base - 4.0)) < 1e-12
                and np.max(np.abs(w2 / base - 0.25)) < 1e-12)

    # Snell and reflection invariants
    rng = np.random.default_rng(0)
    snell_dev = 0.0
    normal = np.array([0.0, 0.0, -1.0])
    for _ in range(100):
        inc = rng.uniform(0.0, 1.0)
        n1, n2 = rng.uniform(1.0, 2.0, size=2)
        d = np.array([np.sin(inc), 0.0, np.cos(inc)])
        try:
            out = refract(Ray(origin=np.zeros(3), direction=d), np.zeros(3),
                          normal, n1, n2)
        except TotalInternalReflection:
            continue
        sin_out = np.hypot(out.direction[0], out.direction[1])
        snell_dev = max(snell_dev, abs(n1 * np.sin(inc) - n2 * sin_out))
    snell_ok = snell_dev < 1e-12

    # dipole cap closed form vs direct quadrature
    theta1 = 0.7
    axis_polar = 0.5
    n = 400001
    h = (np.pi - theta1) / n
    th = theta1 + (np.arange(n) + 0.5) * h
    u = np.cos(th)
    c2 = np.cos(axis_polar) ** 2
    s2 = np.sin(axis_polar) ** 2
    pat = 3.0 / (8.0 * np.pi) * (1.0 - c2 * u * u - s2 * (1.0 - u * u) / 2.0)
    quad = float((2.0 * np.pi * np.sin(th) * pat * h).sum())
    cap_dev = abs(dipole_cap_fraction(axis_polar, theta1) - quad)
    cap_ok = cap_dev < 1e-9

    # Monte Carlo vs quadrature within 3 sigma
    emission = EmissionModel(kind="dipole", axis=(np.sin(0.5), 0.0, np.cos(0.5)))
    q = solid_angle(2.0, MirrorSpec(), emission=emission, mode="quadrature",
                    n_samples=200001)
    mc = solid_angle(2.0, MirrorSpec(), emission=emission, mode="mc",
                     n_samples=200000, seed=2)
    mc_dev = abs(mc["weighted_fraction"] - q["weighted_fraction"])
    mc_ok = mc_dev <= 3.0 * mc["weighted_stderr"]

    ok = field_ok and scale_ok and snell_ok and cap_ok and mc_ok
    _gate(12, "property suites",
          ok, f"coax err={err20:.2e} (< 1e-3, refinement x{err40 / err20:.2f}), "
              f"scaling dev<1e-12 ({scale_ok}), snell dev={snell_dev:.1e} (< 1e-12), "
              f"dipole cap dev={cap_dev:.1e} (< 1e-9), "
              f"mc dev={mc_dev:.2e} <= 3 sigma ({3.0 * mc['weighted_stderr']:.2e})")
