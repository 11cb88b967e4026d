"""Run configuration: strict YAML schema, unit suffixes, deterministic hashing.

Canonical units inside the config dict: lengths mm, angles deg, voltages V,
frequencies Hz, masses u, charges e. Values in YAML or overrides may carry a
unit suffix ("270 V", "23 MHz", "10 um"); bare numbers are taken as canonical.
Unknown keys are rejected with their dotted path.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import re
import tempfile

import yaml

from .constants import ATOMIC_MASS, ELEMENTARY_CHARGE
from .errors import ConfigError, IoError
from .geometry import (
    GridSpec,
    MirrorSegment,
    MirrorSpec,
    NeedleSpec,
    PlateSpec,
    RingSpec,
    TrapGeometry,
)
from .pseudo import IonSpecies, RfDrive

_DEG_PER_RAD = 57.29577951308232

_UNIT_FACTORS = {
    "length": {"nm": 1e-6, "um": 1e-3, "µm": 1e-3, "mm": 1.0, "cm": 10.0, "m": 1000.0},
    "angle": {"deg": 1.0, "rad": _DEG_PER_RAD, "mrad": _DEG_PER_RAD * 1e-3},
    "voltage": {"mv": 1e-3, "v": 1.0, "kv": 1e3},
    "frequency": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "mass": {"u": 1.0, "amu": 1.0},
    "charge": {"e": 1.0},
    "float": {},
    "int": {},
    "str": None,
    "bool": None,
}

# leaf -> unit kind; lists written as [kind]; "*" is a free-key mapping
SCHEMA = {
    "rf": {"voltage": "voltage", "frequency": "frequency"},
    "ion": {"mass": "mass", "charge": "charge"},
    "mirror": {
        "radius_of_curvature": "length",
        "aperture_radius": "length",
        "hole_radius": "length",
        "conic_constant": "float",
    },
    "needle": {
        "shaft_radius": "length",
        "taper_half_angle": "angle",
        "tip_z": "length",
        "travel": ["length"],
    },
    "ring": {
        "inner_radius": "length",
        "outer_radius": "length",
        "center_z": "length",
        "thickness": "length",
    },
    "plate": {"aperture_radius": "length", "center_z": "length", "thickness": "length"},
    "chamber": {"radius": "length"},
    "grid": {"r_max": "length", "z_min": "length", "z_max": "length", "spacing": "length"},
    "solver": {"tolerance": "float", "max_iterations": "int"},
    "roles": {"*": "str"},
    "dc": {"*": "voltage"},
    "mirror_segments": [
        {"z_min": "length", "z_max": "length", "role": "str", "bias": "voltage"}
    ],
    "collect": {
        "ion_z": "length",
        "emission": "str",
        "dipole_axis": ["float"],
        "excitations": "float",
        "mc_samples": "int",
    },
    "crystal": {
        "n_ions": "int",
        "axial_frequency": "frequency",
        "radial_frequency": "frequency",
        "restarts": "int",
    },
    "trace": {
        "source_z": "length",
        "n_rays": "int",
        "min_angle": "angle",
        "max_angle": "angle",
    },
    "corrector": {
        "source_z": "length",
        "window_z": "length",
        "window_thickness": "length",
        "window_index": "float",
        "front_face_z": "length",
        "material_index": "float",
        "min_angle": "angle",
        "max_angle": "angle",
        "inner_thickness": "length",
        "design_rays": "int",
        "export_pitch": "length",
    },
    "scan": {"start": "length", "stop": "length", "points": "int", "spacing": "length"},
}

DEFAULTS = {
    "rf": {"voltage": 270.0, "frequency": 23.0e6},
    "ion": {"mass": 137.905247, "charge": 1.0},
    "mirror": {
        "radius_of_curvature": 4.0,
        "aperture_radius": 3.0,
        "hole_radius": 0.375,
        "conic_constant": 0.0,
    },
    "needle": {
        "shaft_radius": 0.25,
        "taper_half_angle": 30.0,
        "tip_z": 0.5,
        "travel": [0.5, 2.1],
    },
    "ring": {"inner_radius": 3.4, "outer_radius": 6.0, "center_z": 1.7, "thickness": 1.0},
    "plate": {"aperture_radius": 5.0, "center_z": 8.0, "thickness": 0.5},
    "chamber": {"radius": 12.0},
    "grid": {"r_max": 12.0, "z_min": -1.0, "z_max": 10.0, "spacing": 0.010},
    "solver": {"tolerance": 1e-7, "max_iterations": 200000},
    "roles": {"mirror": "rf", "needle": "ground", "ring": "ground", "plate": "ground"},
    "dc": {},
    "collect": {
        "ion_z": 2.0,
        "emission": "isotropic",
        "dipole_axis": [0.0, 0.0, 1.0],
        "excitations": 1.0e6,
        "mc_samples": 200000,
    },
    "crystal": {
        "n_ions": 7,
        "axial_frequency": 420.0e3,
        "radial_frequency": 200.0e3,
        "restarts": 8,
    },
    "trace": {
        "source_z": 2.25,
        "n_rays": 20000,
        "min_angle": 11.0,
        "max_angle": 71.0,
    },
    "corrector": {
        "source_z": 2.25,
        "window_z": 40.0,
        "window_thickness": 4.0,
        "window_index": 1.458,
        "front_face_z": 48.0,
        "material_index": 1.49,
        "min_angle": 11.0,
        "max_angle": 71.0,
        "inner_thickness": 9.0,
        "design_rays": 801,
        "export_pitch": 0.010,
    },
    "scan": {"start": 0.5, "stop": 2.1, "points": 8, "spacing": 0.020},
}

# sections that may be nulled out in YAML to remove the electrode
_OPTIONAL_SECTIONS = ("needle", "ring", "plate")

_QTY_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-zµ]*)\s*$")


def parse_quantity(value, kind, path):
    """Coerce a YAML scalar (number or 'number unit' string) to canonical units."""
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        num, unit = float(value), ""
    elif isinstance(value, str):
        m = _QTY_RE.match(value)
        if not m:
            raise ConfigError(f"{path}: cannot parse quantity {value!r}")
        num, unit = float(m.group(1)), m.group(2)
    else:
        raise ConfigError(f"{path}: expected a number, got {type(value).__name__}")
    factors = _UNIT_FACTORS[kind]
    if unit:
        factor = factors.get(unit.lower())
        if factor is None:
            raise ConfigError(f"{path}: unit {unit!r} invalid for {kind}")
        num *= factor
    if kind == "int":
        if abs(num - round(num)) > 1e-9:
            raise ConfigError(f"{path}: expected an integer, got {num}")
        return int(round(num))
    return num


def _validate(node, schema, path):
    """Recursively coerce node against schema; unknown keys are fatal."""
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"{path or 'config'}: expected a mapping")
        wildcard = schema.get("*")
        out = {}
        for key, value in node.items():
            child_path = f"{path}.{key}" if path else str(key)
            if key in schema:
                child_schema = schema[key]
            elif wildcard is not None:
                child_schema = wildcard
            else:
                raise ConfigError(f"unknown config key {child_path!r}")
            if value is None and key in _OPTIONAL_SECTIONS and not path:
                out[key] = None
                continue
            out[key] = _validate(value, child_schema, child_path)
        return out
    if isinstance(schema, list):
        if not isinstance(node, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return [
            _validate(item, schema[0], f"{path}[{i}]") for i, item in enumerate(node)
        ]
    return parse_quantity(node, schema, path)


def _deep_merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if value is None:
            out[key] = None
        elif isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_override(data, text):
    """Apply one 'a.b.c=value' override string in place of the merged dict."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    dotted, raw = text.split("=", 1)
    keys = dotted.strip().split(".")
    schema = SCHEMA
    node = data
    for i, key in enumerate(keys):
        last = i == len(keys) - 1
        if isinstance(schema, dict):
            child_schema = schema.get(key, schema.get("*"))
            if child_schema is None:
                raise ConfigError(f"unknown config key {dotted!r}")
        else:
            raise ConfigError(f"override {dotted!r} descends into a list")
        if last:
            if isinstance(child_schema, list):
                if isinstance(child_schema[0], dict):
                    raise ConfigError(
                        f"{dotted!r} holds structured entries; set it in YAML"
                    )
                parts = [p for p in raw.split(",") if p.strip()]
                node[key] = [
                    parse_quantity(p, child_schema[0], dotted) for p in parts
                ]
            elif isinstance(child_schema, dict):
                raise ConfigError(f"override {dotted!r} targets a section")
            else:
                value = yaml.safe_load(raw) if child_schema == "bool" else raw
                node[key] = parse_quantity(value, child_schema, dotted)
        else:
            schema = child_schema
            if node.get(key) is None:
                if key in _OPTIONAL_SECTIONS:
                    raise ConfigError(
                        f"cannot override {dotted!r}: section {key!r} was removed"
                    )
                node[key] = {}
            node = node[key]
    return data


def load_config(path=None, overrides=()):
    """Defaults, then the YAML file, then key=value overrides; fully validated."""
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as f:
                user = yaml.safe_load(f) or {}
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config root in {path} must be a mapping")
        user = _validate(user, SCHEMA, "")
        data = _deep_merge(data, user)
    for text in overrides:
        apply_override(data, text)
    return _validate(data, SCHEMA, "")


def config_sha256(data) -> str:
    return hashlib.sha256(
        json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def build_geometry(data) -> TrapGeometry:
    m = data["mirror"]
    mirror = MirrorSpec(
        radius_of_curvature=m["radius_of_curvature"],
        aperture_radius=m["aperture_radius"],
        hole_radius=m["hole_radius"],
        conic_constant=m["conic_constant"],
    )
    needle = None
    if data.get("needle") is not None:
        n = data["needle"]
        needle = NeedleSpec(
            shaft_radius=n["shaft_radius"],
            taper_half_angle_deg=n["taper_half_angle"],
            tip_z=n["tip_z"],
            travel_range=tuple(n["travel"]),
        )
    ring = None
    if data.get("ring") is not None:
        r = data["ring"]
        ring = RingSpec(r["inner_radius"], r["outer_radius"], r["center_z"], r["thickness"])
    plate = None
    if data.get("plate") is not None:
        p = data["plate"]
        plate = PlateSpec(p["aperture_radius"], p["center_z"], p["thickness"])
    segments = None
    if data.get("mirror_segments"):
        segments = tuple(
            MirrorSegment(s["z_min"], s["z_max"], s.get("role", "rf"), s.get("bias", 0.0))
            for s in data["mirror_segments"]
        )
    roles = dict(data.get("roles", {}))
    for name in list(roles):
        if data.get(name, "missing") is None:
            del roles[name]
    return TrapGeometry(
        mirror=mirror,
        needle=needle,
        ring=ring,
        plate=plate,
        chamber_radius=data["chamber"]["radius"],
        roles=roles,
        dc_biases=dict(data.get("dc", {})),
        mirror_segments=segments,
    )


def build_grid(data) -> GridSpec:
    g = data["grid"]
    return GridSpec(g["r_max"], g["z_min"], g["z_max"], g["spacing"])


def build_drive(data) -> RfDrive:
    return RfDrive(data["rf"]["voltage"], data["rf"]["frequency"])


def build_ion(data) -> IonSpecies:
    return IonSpecies(
        mass=data["ion"]["mass"] * ATOMIC_MASS,
        charge=data["ion"]["charge"] * ELEMENTARY_CHARGE,
    )


def atomic_write_text(path, text):
    """Write-all-or-nothing via a sibling temp file and os.replace."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix="~")
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def atomic_write_bytes(path, blob):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix="~")
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
