"""Command-line entry point.

Every subcommand reads the layered configuration (defaults, optional YAML,
key=value overrides with unit suffixes), writes its artifacts atomically into
--output-dir, and records a manifest with the configuration hash. Numeric
artifacts are byte-identical for identical inputs; the thread-count
environment variable changes wall time only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, IoError, PhysicsError
from . import collect as collect_mod
from . import config as config_mod
from . import corrector as corrector_mod
from . import crystal as crystal_mod
from . import pseudo as pseudo_mod
from . import rays as rays_mod
from . import svgplot
from .field import write_field_csv

THREADS_ENV = "TACKTRAP_THREADS"


def _apply_thread_env():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return
    try:
        n = max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _write_csv(path, header, rows, fmt="{:.10g}"):
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (bool, np.bool_)):
                cells.append("true" if v else "false")
            elif v is None or (isinstance(v, float) and not np.isfinite(v)):
                cells.append("nan")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(fmt.format(float(v)))
        lines.append(",".join(cells))
    config_mod.atomic_write_text(path, "\n".join(lines) + "\n")


class RunContext:
    """Per-invocation bookkeeping: config, output dir, manifest."""

    def __init__(self, args):
        self.data = config_mod.load_config(args.config, args.overrides or ())
        self.output_dir = args.output_dir
        self.seed = args.seed
        self.format = args.format
        self.command = args.command
        self.outputs = []
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as exc:
            raise IoError(f"cannot create output directory: {exc}") from exc

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.output_dir, name)

    @property
    def want_csv(self):
        return self.format in ("csv", "both")

    @property
    def want_svg(self):
        return self.format in ("svg", "both")

    def finish(self, summary):
        summary_path = self.path("summary.json")
        config_mod.atomic_write_text(
            summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
        manifest = {
            "command": self.command,
            "package_version": __version__,
            "config_sha256": config_mod.config_sha256(self.data),
            "seed": self.seed,
            "format": self.format,
            "outputs": sorted(self.outputs),
            "config": self.data,
        }
        config_mod.atomic_write_text(
            os.path.join(self.output_dir, "manifest.json"),
            json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        )


def cmd_solve_field(args):
    ctx = RunContext(args)
    geometry = config_mod.build_geometry(ctx.data)
    grid = config_mod.build_grid(ctx.data)
    solver = ctx.data["solver"]
    fld, report = pseudo_mod.solve_rf_unit(
        geometry, grid, tolerance=solver["tolerance"],
        max_iterations=solver["max_iterations"],
    )
    fld.save_binary(ctx.path("field.bin"))
    if ctx.want_csv:
        stride = max(1, grid.nr // 240)
        write_field_csv(fld, ctx.path("field.csv"), stride=stride)
    if ctx.want_svg:
        j_axis = np.argmin(np.abs(grid.z))
        svgplot.plot_svg(
            ctx.path("field_profile.svg"),
            [("axis", fld.z.tolist(), fld.values[0, :].tolist()),
             ("z=0 row", fld.r.tolist(), fld.values[:, int(j_axis)].tolist())],
            kind="line", title="unit-drive potential",
            xlabel="position (mm)", ylabel="potential (V)",
        )
    ctx.finish({
        "iterations": report.iterations,
        "final_residual": report.final_residual,
        "converged": report.converged,
        "grid": {"nr": grid.nr, "nz": grid.nz, "spacing_mm": grid.spacing},
    })
    print(
        f"solve-field: {report.iterations} sweeps, residual "
        f"{report.final_residual:.3e}, converged={report.converged}"
    )
    return 0


def _analysis_summary(analysis):
    return {
        "minimum_z_mm": analysis.minimum.z,
        "minimum_above_tip_mm": analysis.minimum.above_tip,
        "pseudopotential_min_ev": analysis.minimum.value,
        "depth_ev": analysis.depth.depth,
        "escape_event": analysis.depth.event,
        "saddle_r_mm": analysis.depth.saddle[0],
        "saddle_z_mm": analysis.depth.saddle[1],
        "axial_hz": analysis.axial_hz,
        "radial_hz": analysis.radial_hz,
        "axial_over_radial": analysis.axial_hz / analysis.radial_hz,
    }


def _run_analysis(ctx):
    geometry = config_mod.build_geometry(ctx.data)
    grid = config_mod.build_grid(ctx.data)
    drive = config_mod.build_drive(ctx.data)
    ion = config_mod.build_ion(ctx.data)
    solver = ctx.data["solver"]
    fld, _report = pseudo_mod.solve_rf_unit(
        geometry, grid, tolerance=solver["tolerance"],
        max_iterations=solver["max_iterations"],
    )
    psi = pseudo_mod.pseudopotential(fld, drive, ion)
    tip = geometry.needle.tip_z if geometry.needle is not None else None
    minimum = pseudo_mod.find_minimum(psi, tip_z=tip)
    depth = pseudo_mod.trap_depth(psi, minimum)
    f_ax, f_rad = pseudo_mod.secular_frequencies(psi, minimum, ion)
    analysis = pseudo_mod.TrapAnalysis(minimum, depth, f_ax, f_rad)
    return geometry, grid, psi, analysis


def cmd_pseudo_map(args):
    ctx = RunContext(args)
    _geometry, grid, psi, analysis = _run_analysis(ctx)
    if ctx.want_csv:
        stride = max(1, grid.nr // 240)
        write_field_csv(psi, ctx.path("pseudo.csv"), stride=stride)
        _write_csv(
            ctx.path("axis_profile.csv"), ["z_mm", "psi_ev"],
            list(zip(psi.z.tolist(), psi.values[0, :].tolist())),
        )
    if ctx.want_svg:
        svgplot.plot_svg(
            ctx.path("axis_profile.svg"),
            [("on-axis", psi.z.tolist(), psi.values[0, :].tolist())],
            kind="line", title="pseudopotential on the axis",
            xlabel="z (mm)", ylabel="Psi (eV)",
        )
    ctx.finish(_analysis_summary(analysis))
    print(
        f"pseudo-map: minimum at z={analysis.minimum.z:.4f} mm, "
        f"depth {analysis.depth.depth * 1e3:.2f} meV"
    )
    return 0


def cmd_secular(args):
    ctx = RunContext(args)
    _geometry, _grid, _psi, analysis = _run_analysis(ctx)
    if ctx.want_csv:
        _write_csv(
            ctx.path("secular.csv"),
            ["axial_hz", "radial_hz", "ratio", "minimum_z_mm", "depth_ev"],
            [[analysis.axial_hz, analysis.radial_hz,
              analysis.axial_hz / analysis.radial_hz,
              analysis.minimum.z, analysis.depth.depth]],
        )
    ctx.finish(_analysis_summary(analysis))
    print(
        f"secular: axial {analysis.axial_hz / 1e3:.1f} kHz, radial "
        f"{analysis.radial_hz / 1e3:.1f} kHz, ratio "
        f"{analysis.axial_hz / analysis.radial_hz:.3f}"
    )
    return 0


def cmd_needle_scan(args):
    ctx = RunContext(args)
    geometry = config_mod.build_geometry(ctx.data)
    drive = config_mod.build_drive(ctx.data)
    ion = config_mod.build_ion(ctx.data)
    scan = ctx.data["scan"]
    from .geometry import GridSpec

    grid = GridSpec(
        r_max=ctx.data["grid"]["r_max"], z_min=ctx.data["grid"]["z_min"],
        z_max=ctx.data["grid"]["z_max"], spacing=scan["spacing"],
    )
    tips = np.linspace(scan["start"], scan["stop"], scan["points"])
    result = pseudo_mod.needle_scan(geometry, tips, drive, ion, grid=grid)
    if ctx.want_csv:
        _write_csv(
            ctx.path("scan.csv"),
            ["tip_z_mm", "minimum_z_mm", "above_tip_mm", "depth_ev", "ok"],
            [[r.tip_z, r.minimum_z, r.above_tip, r.depth, r.ok] for r in result.rows],
        )
    if ctx.want_svg:
        good = [r for r in result.rows if r.ok]
        svgplot.plot_svg(
            ctx.path("scan.svg"),
            [("minimum", [r.tip_z for r in good], [r.minimum_z for r in good])],
            kind="line", title="trap minimum vs needle tip",
            xlabel="tip z (mm)", ylabel="minimum z (mm)",
        )
    ctx.finish({
        "r_squared": result.r_squared,
        "central_window_mm": list(result.central_window),
        "depth_ratio_range": list(result.depth_ratio_range),
        "points": len(result.rows),
        "failed_points": sum(1 for r in result.rows if not r.ok),
    })
    print(
        f"needle-scan: R^2 {result.r_squared:.6f} over central window, "
        f"depth ratios {result.depth_ratio_range[0]:.2f}.."
        f"{result.depth_ratio_range[1]:.2f}"
    )
    return 0


def cmd_crystal(args):
    ctx = RunContext(args)
    ion = config_mod.build_ion(ctx.data)
    c = ctx.data["crystal"]
    trap = crystal_mod.HarmonicTrap(c["axial_frequency"], c["radial_frequency"])
    result = crystal_mod.relax(
        c["n_ions"], trap, ion, restarts=c["restarts"], seed=ctx.seed
    )
    report = crystal_mod.classify(result)
    if ctx.want_csv:
        crystal_path = ctx.path("positions.csv")
        crystal_mod.write_positions_csv(result, crystal_path)
    if ctx.want_svg:
        um = result.positions * 1e6
        svgplot.plot_svg(
            ctx.path("crystal.svg"),
            [("ions", um[:, 0].tolist(), um[:, 1].tolist())],
            kind="scatter", title=f"{c['n_ions']}-ion crystal (top view)",
            xlabel="x (um)", ylabel="y (um)",
        )
    ctx.finish({
        "n_ions": c["n_ions"],
        "energy_j": result.energy,
        "converged": result.converged,
        "planarity": report["planarity"],
        "shells": report["shells"],
    })
    print(
        f"crystal: {c['n_ions']} ions, shells {report['shells']}, "
        f"planarity {report['planarity']:.4f}"
    )
    return 0


def cmd_trace(args):
    """Mirror-only spot study: the reflected bundle's best focus and pattern."""
    ctx = RunContext(args)
    geometry = config_mod.build_geometry(ctx.data)
    t = ctx.data["trace"]
    source = np.array([0.0, 0.0, t["source_z"] * 1e-3])
    stack = rays_mod.SurfaceStack(
        [rays_mod.ConicMirrorElement(rays_mod.mirror_surface(geometry.mirror))]
    )
    bundle = rays_mod.trace_bundle(
        source, stack, t["n_rays"],
        np.radians(t["max_angle"]), np.radians(t["min_angle"]),
    )
    z_lo = geometry.mirror.cap_height * 1e-3
    z_hi = 0.2
    focus_z, diagram = rays_mod.best_focus(bundle, z_lo, z_hi)
    if ctx.want_csv:
        _write_csv(
            ctx.path("spot.csv"), ["x_m", "y_m"],
            [[h[0], h[1]] for h in diagram.hits],
        )
    if ctx.want_svg:
        svgplot.plot_svg(
            ctx.path("spot.svg"),
            [("hits", (diagram.hits[:, 0] * 1e6).tolist(),
              (diagram.hits[:, 1] * 1e6).tolist())],
            kind="scatter", title=f"spot at z={focus_z * 1e3:.3f} mm",
            xlabel="x (um)", ylabel="y (um)",
        )
    radii = np.hypot(*(diagram.hits - diagram.centroid[None, :]).T)
    ctx.finish({
        "rays": int(t["n_rays"]),
        "alive": int(bundle.alive.sum()),
        "best_focus_z_m": focus_z,
        "rms_radius_m": diagram.rms_radius,
        "fwhm_m": diagram.fwhm_estimate,
        "median_radius_m": float(np.median(radii)),
    })
    print(
        f"trace: best focus z={focus_z * 1e3:.3f} mm, rms radius "
        f"{diagram.rms_radius * 1e6:.2f} um over {int(bundle.alive.sum())} rays"
    )
    return 0


def _corrector_spec(data):
    geometry = config_mod.build_geometry(data)
    c = data["corrector"]
    return corrector_mod.CorrectorDesignSpec(
        source_z=c["source_z"] * 1e-3,
        mirror=geometry.mirror,
        window=corrector_mod.PlaneWindow(
            c["window_z"] * 1e-3, c["window_thickness"] * 1e-3, c["window_index"]
        ),
        front_face_z=c["front_face_z"] * 1e-3,
        material_index=c["material_index"],
        design_ray_count=c["design_rays"],
        min_emission_angle=np.radians(c["min_angle"]),
        max_emission_angle=np.radians(c["max_angle"]),
        inner_thickness=c["inner_thickness"] * 1e-3,
    )


def cmd_design_corrector(args):
    ctx = RunContext(args)
    spec = _corrector_spec(ctx.data)
    profile = corrector_mod.design(spec)
    report = corrector_mod.verify(profile, spec)
    if ctx.want_csv:
        corrector_mod.export_profile(
            profile, ctx.path("corrector_profile.csv"),
            pitch=ctx.data["corrector"]["export_pitch"] * 1e-3,
        )
    if ctx.want_svg:
        svgplot.plot_svg(
            ctx.path("corrector_profile.svg"),
            [("sag", (profile.r * 1e3).tolist(), (profile.z * 1e3).tolist())],
            kind="line", title="corrector rear surface",
            xlabel="radius (mm)", ylabel="z (mm)",
        )
    names = ["z0"] + [f"a{2 * (i + 1)}" for i in range(len(profile.coefficients) - 1)]
    ctx.finish({
        "direction_spread_rad": report.direction_spread,
        "opl_spread_m": report.opl_spread,
        "ion_referred_rms_m": report.ion_referred_rms,
        "comparison_na": report.comparison_na,
        "fit_residual_rms_m": profile.fit_residual_rms,
        "coefficients": dict(zip(names, [float(v) for v in profile.coefficients])),
        "design_band_rad": list(profile.design_band),
    })
    print(
        f"design-corrector: spread {report.direction_spread:.2e} rad, "
        f"ion-referred rms {report.ion_referred_rms * 1e6:.4f} um, "
        f"fit residual {profile.fit_residual_rms * 1e6:.3f} um"
    )
    return 0


def cmd_collect(args):
    ctx = RunContext(args)
    geometry = config_mod.build_geometry(ctx.data)
    c = ctx.data["collect"]
    emission = collect_mod.EmissionModel(
        kind=c["emission"], axis=tuple(c["dipole_axis"])
    )
    analytic = collect_mod.solid_angle(
        c["ion_z"], geometry.mirror, geometry.needle, emission, mode="analytic"
    )
    quad = collect_mod.solid_angle(
        c["ion_z"], geometry.mirror, geometry.needle, emission,
        mode="quadrature", n_samples=200001,
    )
    mc = collect_mod.solid_angle(
        c["ion_z"], geometry.mirror, geometry.needle, emission,
        mode="mc", n_samples=c["mc_samples"], seed=ctx.seed,
    )
    cone = collect_mod.na_equivalent(analytic["geometric_fraction"])
    if ctx.want_csv or ctx.want_svg:
        lo = geometry.mirror.sag(geometry.mirror.hole_radius) + 0.15
        if geometry.needle is not None:
            lo = max(lo, geometry.needle.tip_z + 0.05)
        zs = np.round(np.arange(lo, 4.0 + 1e-9, 0.05), 6)
        rows = collect_mod.fraction_vs_position(zs, geometry.mirror, geometry.needle,
                                                emission)
        if ctx.want_csv:
            _write_csv(ctx.path("fraction_vs_z.csv"),
                       ["ion_z_mm", "geometric_fraction", "weighted_fraction"], rows)
        if ctx.want_svg:
            svgplot.plot_svg(
                ctx.path("fraction_vs_z.svg"),
                [("geometric", [r[0] for r in rows], [r[1] for r in rows])],
                kind="line", title="collection fraction vs ion height",
                xlabel="ion z (mm)", ylabel="fraction of 4pi",
            )
    ctx.finish({
        "ion_z_mm": c["ion_z"],
        "analytic": analytic,
        "quadrature": quad,
        "monte_carlo": mc,
        "equivalent_cone": cone,
    })
    print(
        f"collect: geometric fraction {analytic['geometric_fraction']:.4f} "
        f"(NA-equivalent {cone['na']:.4f}, {cone['omega_sr']:.3f} sr)"
    )
    return 0


def cmd_budget(args):
    ctx = RunContext(args)
    geometry = config_mod.build_geometry(ctx.data)
    c = ctx.data["collect"]
    emission = collect_mod.EmissionModel(
        kind=c["emission"], axis=tuple(c["dipole_axis"])
    )
    res = collect_mod.solid_angle(
        c["ion_z"], geometry.mirror, geometry.needle, emission, mode="analytic"
    )
    budget = collect_mod.photon_budget(
        res["weighted_fraction"], n_excitations=c["excitations"]
    )
    if ctx.want_csv:
        rows = []
        running = res["weighted_fraction"]
        rows.append(["collected_fraction", res["weighted_fraction"], running])
        for name, t in budget.loss_chain:
            running *= t
            rows.append([name, t, running])
        _write_csv(ctx.path("budget.csv"),
                   ["stage", "transmittance", "cumulative"], rows)
    ctx.finish({
        "collected_fraction": budget.collected_fraction,
        "detected_per_excitation": budget.detected_per_excitation,
        "expected_counts": budget.expected_counts,
        "excitations": c["excitations"],
        "loss_chain": {name: t for name, t in budget.loss_chain},
    })
    print(
        f"budget: {budget.detected_per_excitation * 100:.3f}% detected per "
        f"excitation, {budget.expected_counts:.0f} counts per "
        f"{c['excitations']:.0f} excitations"
    )
    return 0


def cmd_reproduce(args):
    """Recompute the headline numbers and compare against their quoted bands."""
    ctx = RunContext(args)
    rows = []

    def check(name, value, lo, hi, unit=""):
        ok = bool(lo <= value <= hi)
        rows.append([name, value, lo, hi, unit, "PASS" if ok else "FAIL"])
        return ok

    geometry = config_mod.build_geometry(ctx.data)
    drive = config_mod.build_drive(ctx.data)
    ion = config_mod.build_ion(ctx.data)

    frac_half_r = collect_mod.solid_angle(2.0, geometry.mirror, geometry.needle)
    check("collection_fraction_z_2.0mm",
          frac_half_r["geometric_fraction"], 0.381, 0.391)
    frac_design = collect_mod.solid_angle(2.25, geometry.mirror, geometry.needle)
    check("collection_fraction_z_2.25mm",
          frac_design["geometric_fraction"], 0.345, 0.355)
    cone = collect_mod.na_equivalent(0.24)
    check("omega_for_fraction_0.24", cone["omega_sr"], 2.9, 3.1, "sr")
    check("na_for_fraction_0.24", cone["na"], 0.84, 0.86)

    budget = collect_mod.photon_budget(0.24, n_excitations=1e6)
    check("counts_per_1e6_excitations", budget.expected_counts, 8000, 12000)

    _geometry, _grid, _psi, analysis = _run_analysis(ctx)
    check("minimum_above_tip", analysis.minimum.above_tip, 0.4675, 0.6325, "mm")
    check("trap_depth", analysis.depth.depth, 0.025, 0.100, "eV")
    check("axial_over_radial", analysis.axial_hz / analysis.radial_hz, 1.47, 2.73)

    c = ctx.data["crystal"]
    trap = crystal_mod.HarmonicTrap(c["axial_frequency"], c["radial_frequency"])
    pair = crystal_mod.relax(2, trap, ion, restarts=4, seed=ctx.seed)
    spacing = float(np.linalg.norm(pair.positions[0] - pair.positions[1]))
    expected = trap.two_ion_spacing(ion)
    check("two_ion_spacing_error", abs(spacing / expected - 1.0), 0.0, 1e-3)

    spec = _corrector_spec(ctx.data)
    profile = corrector_mod.design(spec)
    report = corrector_mod.verify(profile, spec)
    check("corrector_direction_spread", report.direction_spread, 0.0, 1e-4, "rad")
    check("corrector_ion_referred_rms", report.ion_referred_rms, 0.0, 1.15e-6, "m")

    if ctx.want_csv:
        _write_csv(
            ctx.path("headline_results.csv"),
            ["quantity", "value", "band_low", "band_high", "unit", "status"],
            rows,
        )
    n_pass = sum(1 for r in rows if r[-1] == "PASS")
    ctx.finish({
        "results": [
            {"quantity": r[0], "value": float(r[1]), "band": [float(r[2]), float(r[3])],
             "unit": r[4], "status": r[5]}
            for r in rows
        ],
        "passed": n_pass,
        "total": len(rows),
    })
    width = max(len(r[0]) for r in rows)
    for r in rows:
        print(f"{r[0]:<{width}}  {r[1]:>12.6g}  [{r[2]:.6g}, {r[3]:.6g}] {r[4]:<4} {r[5]}")
    print(f"reproduce: {n_pass}/{len(rows)} headline checks passed")
    return 0


_COMMANDS = {
    "solve-field": (cmd_solve_field, "solve the unit-drive RF potential"),
    "pseudo-map": (cmd_pseudo_map, "pseudopotential map, minimum and depth"),
    "secular": (cmd_secular, "secular frequencies at the trap minimum"),
    "needle-scan": (cmd_needle_scan, "minimum and depth vs needle tip position"),
    "crystal": (cmd_crystal, "relax an ion Coulomb crystal"),
    "trace": (cmd_trace, "trace an emission bundle off the mirror"),
    "design-corrector": (cmd_design_corrector, "synthesize the aspheric corrector"),
    "collect": (cmd_collect, "solid-angle collection fractions"),
    "budget": (cmd_budget, "photon detection budget"),
    "reproduce": (cmd_reproduce, "recompute headline results with pass/fail"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tacktrap",
        description="desk-scale design toolkit for a mirror-and-needle ion trap",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (func, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=func)
    # accepted spelling from older scripts; not advertised
    alias = sub.add_parser("reproduce-paper")
    _add_common(alias)
    alias.set_defaults(func=cmd_reproduce)
    return parser


def _add_common(p):
    p.add_argument("--config", default=None, help="YAML configuration file")
    p.add_argument("--output-dir", default="out", help="artifact directory")
    p.add_argument("--seed", type=int, default=0, help="seed for stochastic modes")
    p.add_argument("--format", choices=("csv", "svg", "both"), default="csv")
    p.add_argument(
        "overrides", nargs="*", metavar="KEY=VALUE",
        help="config overrides, e.g. needle.tip_z=1.2mm rf.voltage=300V",
    )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "reproduce-paper":
        args.command = "reproduce"
    try:
        _apply_thread_env()
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except PhysicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
