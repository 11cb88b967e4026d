"""Solid-angle accounting: closed forms, quadrature, Monte Carlo, budget."""

import numpy as np
import pytest

from tacktrap.collect import (
    DEFAULT_LOSS_CHAIN,
    EmissionModel,
    dipole_cap_fraction,
    fraction_vs_position,
    mirror_band_angles,
    na_equivalent,
    needle_shadow_angle,
    photon_budget,
    solid_angle,
)
from tacktrap.errors import ConfigError, IonInsideElectrode
from tacktrap.geometry import MirrorSpec, NeedleSpec


MIRROR = MirrorSpec()
TILTED_DIPOLE = EmissionModel(kind="dipole", axis=(np.sin(0.5), 0.0, np.cos(0.5)))


class TestGeometricFraction:
    @pytest.mark.parametrize(
        "ion_z, expected",
        [(2.0, 0.38607), (2.25, 0.35004), (4.0, 0.16708)],
    )
    def test_frozen_values(self, ion_z, expected):
        res = solid_angle(ion_z, MIRROR)
        assert res["geometric_fraction"] == pytest.approx(expected, abs=1e-4)

    def test_full_bowl_from_center_is_hemisphere(self):
        bowl = MirrorSpec(radius_of_curvature=4.0, aperture_radius=3.999999,
                          hole_radius=0.0)
        res = solid_angle(4.0, bowl)
        assert res["geometric_fraction"] == pytest.approx(0.5, abs=1e-3)

    def test_monotone_in_ion_height(self):
        f = [solid_angle(z, MIRROR)["geometric_fraction"] for z in (2.0, 2.25, 4.0)]
        assert f[0] > f[1] > f[2]

    def test_ion_inside_hole_mouth_rejected(self):
        with pytest.raises(IonInsideElectrode):
            mirror_band_angles(0.01, MIRROR)


class TestModesAgree:
    @pytest.mark.parametrize("emission", [EmissionModel(), TILTED_DIPOLE],
                             ids=["isotropic", "tilted_dipole"])
    def test_analytic_vs_quadrature(self, emission):
        a = solid_angle(2.0, MIRROR, emission=emission, mode="analytic")
        q = solid_angle(2.0, MIRROR, emission=emission, mode="quadrature",
                        n_samples=200001)
        assert abs(a["geometric_fraction"] - q["geometric_fraction"]) < 1e-9
        assert abs(a["weighted_fraction"] - q["weighted_fraction"]) < 1e-9

    @pytest.mark.parametrize("emission", [EmissionModel(), TILTED_DIPOLE],
                             ids=["isotropic", "tilted_dipole"])
    def test_monte_carlo_within_three_sigma(self, emission):
        a = solid_angle(2.0, MIRROR, emission=emission, mode="analytic")
        mc = solid_angle(2.0, MIRROR, emission=emission, mode="mc",
                         n_samples=200000, seed=1)
        assert abs(mc["geometric_fraction"] - a["geometric_fraction"]) <= \
            3.0 * mc["geometric_stderr"]
        assert abs(mc["weighted_fraction"] - a["weighted_fraction"]) <= \
            3.0 * mc["weighted_stderr"]

    def test_monte_carlo_deterministic(self):
        a = solid_angle(2.0, MIRROR, mode="mc", n_samples=5000, seed=3)
        b = solid_angle(2.0, MIRROR, mode="mc", n_samples=5000, seed=3)
        assert a == b


class TestDipoleCap:
    def test_axis_aligned_closed_form(self):
        for theta1 in np.linspace(0.0, np.pi, 11):
            c = np.cos(theta1)
            expected = 0.25 * (2.0 - c) * (1.0 + c) ** 2
            assert dipole_cap_fraction(0.0, theta1) == pytest.approx(expected, abs=1e-12)

    def test_limits(self):
        assert dipole_cap_fraction(0.3, 0.0) == pytest.approx(1.0, abs=1e-12)
        assert dipole_cap_fraction(0.3, np.pi) == pytest.approx(0.0, abs=1e-12)
        assert dipole_cap_fraction(0.7, np.pi / 2) == pytest.approx(0.5, abs=1e-12)

    def test_invalid_angle(self):
        with pytest.raises(ConfigError):
            dipole_cap_fraction(0.0, 4.0)


class TestNeedleShadow:
    def test_shadow_angle_band(self):
        psi = needle_shadow_angle(2.0, NeedleSpec())
        assert np.radians(6.5) < psi < np.radians(8.0)

    def test_shadow_inside_hole_cone_is_free(self):
        bare = solid_angle(2.0, MIRROR)
        shadowed = solid_angle(2.0, MIRROR, needle=NeedleSpec())
        assert shadowed == bare

    def test_ion_below_tip_rejected(self):
        with pytest.raises(IonInsideElectrode):
            solid_angle(0.4, MIRROR, needle=NeedleSpec())


class TestNaEquivalent:
    def test_reference_point(self):
        res = na_equivalent(0.24)
        assert res["omega_sr"] == pytest.approx(0.24 * 4.0 * np.pi, rel=1e-12)
        assert res["na"] == pytest.approx(0.8542, abs=1e-3)
        assert not res["clipped"]

    def test_beyond_hemisphere_clips(self):
        res = na_equivalent(0.6)
        assert res["clipped"]
        assert res["na"] == 1.0


class TestPhotonBudget:
    def test_default_chain(self):
        budget = photon_budget(0.24, n_excitations=1e6)
        product = 1.0
        for _, t in DEFAULT_LOSS_CHAIN:
            product *= t
        assert budget.detected_per_excitation == pytest.approx(0.24 * product, rel=1e-12)
        assert budget.expected_counts == pytest.approx(9997.0, abs=5.0)
        assert 8000 <= budget.expected_counts <= 12000

    def test_chain_transmittances_validated(self):
        with pytest.raises(ConfigError):
            photon_budget(0.24, loss_chain=(("mirror", 1.5),))


class TestEmissionModel:
    def test_bad_kind(self):
        with pytest.raises(ConfigError):
            EmissionModel(kind="laser")

    def test_zero_axis(self):
        with pytest.raises(ConfigError):
            EmissionModel(kind="dipole", axis=(0.0, 0.0, 0.0))


class TestFractionCurve:
    def test_rows(self):
        zs = [1.5, 2.0, 2.5]
        rows = fraction_vs_position(zs, MIRROR)
        assert len(rows) == 3
        assert rows[1][1] == pytest.approx(0.38607, abs=1e-4)
        assert all(len(row) == 3 for row in rows)
