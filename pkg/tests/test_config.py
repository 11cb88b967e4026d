"""Config loading: units, strict keys, overrides, hashing, error codes."""

import numpy as np
import pytest
import yaml

from tacktrap.config import (
    DEFAULTS,
    apply_override,
    atomic_write_text,
    build_drive,
    build_geometry,
    build_grid,
    build_ion,
    config_sha256,
    load_config,
    parse_quantity,
)
from tacktrap.errors import ConfigError, IoError, PhysicsError
from tacktrap.pseudo import IonSpecies, RfDrive


class TestUnits:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("10 um", 0.01),
            ("1 cm", 10.0),
            ("0.004 m", 4.0),
            ("500 nm", 5e-4),
        ],
    )
    def test_lengths_to_mm(self, text, expected):
        assert parse_quantity(text, "length", "x") == pytest.approx(expected, rel=1e-12)

    def test_other_kinds(self):
        assert parse_quantity("0.5 rad", "angle", "x") == pytest.approx(np.degrees(0.5))
        assert parse_quantity("23 mhz", "frequency", "x") == pytest.approx(23e6)
        assert parse_quantity("0.27 kv", "voltage", "x") == pytest.approx(270.0)
        assert parse_quantity("137.905247 u", "mass", "x") == pytest.approx(137.905247)
        assert parse_quantity("1 e", "charge", "x") == pytest.approx(1.0)

    def test_case_insensitive(self):
        assert parse_quantity("10 UM", "length", "x") == parse_quantity("10 um", "length", "x")

    def test_bare_numbers_pass_through(self):
        assert parse_quantity(2.5, "length", "x") == 2.5
        assert parse_quantity("2.5", "length", "x") == 2.5

    def test_wrong_unit_kind_rejected(self):
        with pytest.raises(ConfigError):
            parse_quantity("10 v", "length", "mirror.radius_of_curvature")

    def test_unknown_unit_rejected(self):
        with pytest.raises(ConfigError):
            parse_quantity("10 parsec", "length", "x")


class TestLoadConfig:
    def test_defaults_round_trip(self):
        assert load_config() == DEFAULTS

    def test_shipped_default_file_matches_defaults(self):
        cfg = load_config("configs/default.yaml")
        assert config_sha256(cfg) == config_sha256(DEFAULTS)

    def test_unknown_key_names_dotted_path(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("mirror:\n  radiuss: 4\n")
        with pytest.raises(ConfigError, match="mirror.radiuss"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            load_config(tmp_path / "absent.yaml")

    def test_nullable_sections(self, tmp_path):
        path = tmp_path / "bare.yaml"
        path.write_text("needle: null\nring: null\n")
        cfg = load_config(path)
        geom = build_geometry(cfg)
        assert geom.needle is None
        assert geom.ring is None
        assert "needle" not in geom.roles


class TestOverrides:
    def test_override_equals_file_edit(self, tmp_path):
        via_override = load_config(overrides=("rf.voltage=540",))
        path = tmp_path / "edited.yaml"
        path.write_text("rf:\n  voltage: 540\n")
        via_file = load_config(path)
        assert config_sha256(via_override) == config_sha256(via_file)

    def test_override_with_unit_suffix(self):
        cfg = load_config(overrides=("rf.voltage=0.54 kv",))
        assert cfg["rf"]["voltage"] == pytest.approx(540.0)

    def test_override_unknown_key(self):
        with pytest.raises(ConfigError):
            load_config(overrides=("rf.voltagee=540",))

    def test_override_into_removed_section(self, tmp_path):
        path = tmp_path / "no_needle.yaml"
        path.write_text("needle: null\n")
        with pytest.raises(ConfigError, match="removed"):
            load_config(path, overrides=("needle.tip_z=1.0",))

    def test_structured_list_not_overridable(self):
        with pytest.raises(ConfigError):
            apply_override(dict(DEFAULTS), "mirror_segments=[]")

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            apply_override(dict(DEFAULTS), "rf.voltage")


class TestBuilders:
    def test_ion_and_drive_match_module_defaults(self):
        cfg = load_config()
        ion = build_ion(cfg)
        drive = build_drive(cfg)
        ref_ion = IonSpecies()
        ref_drive = RfDrive()
        assert ion.mass == pytest.approx(ref_ion.mass, rel=1e-12)
        assert ion.charge == pytest.approx(ref_ion.charge, rel=1e-12)
        assert drive.amplitude == ref_drive.amplitude
        assert drive.frequency == ref_drive.frequency

    def test_grid(self):
        grid = build_grid(load_config())
        assert grid.spacing == 0.01
        assert grid.nr == 1201
        assert grid.nz == 1101


class TestHashing:
    def test_key_order_independent(self):
        a = {"x": 1, "y": {"a": 2, "b": 3}}
        b = {"y": {"b": 3, "a": 2}, "x": 1}
        assert config_sha256(a) == config_sha256(b)

    def test_value_sensitivity(self):
        assert config_sha256({"x": 1}) != config_sha256({"x": 2})


class TestAtomicWrite:
    def test_write_and_replace(self, tmp_path):
        path = tmp_path / "out.txt"
        atomic_write_text(path, "first")
        atomic_write_text(path, "second")
        assert path.read_text() == "second"
        assert list(tmp_path.iterdir()) == [path]

    def test_missing_directory(self, tmp_path):
        with pytest.raises(IoError):
            atomic_write_text(tmp_path / "nope" / "out.txt", "x")


class TestErrorTaxonomy:
    def test_exit_codes(self):
        assert ConfigError("x").exit_code == 2
        assert PhysicsError("x").exit_code == 3
        assert IoError("x").exit_code == 4

    def test_subclasses_inherit_codes(self):
        from tacktrap.errors import GridTooCoarse, NoInteriorMinimum, NotConverged
        assert GridTooCoarse("x").exit_code == 2
        assert NotConverged("x").exit_code == 3
        assert NoInteriorMinimum("x").exit_code == 3
