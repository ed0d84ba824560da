import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ardcorr.config import DEFAULT_BANDS
from ardcorr.errors import ConfigError, DomainError, GeometryError, NonphysicalSurfaceError
from ardcorr.radiative_transfer import (
    CONTINENTAL,
    DEFAULT_CONFIG,
    AcquisitionGeometry,
    AerosolModel,
    AtmosphereState,
    BandDefinition,
    CorrectionCoefficients,
    ForwardConfig,
    aerosol_optical_depth,
    forward_coefficients,
    _path_reflectance,
    _rayleigh_tau,
    forward_toa,
    henyey_greenstein_phase,
    gaseous_transmittance,
    path_reflectance,
    rayleigh_optical_depth,
    rayleigh_phase,
    scattering_transmittance,
    spherical_albedo,
)

# Frozen from a standalone evaluation of the closed forms (no package import).
TAU_R_550 = 0.09727501548582909
RHO_PATH_NADIR_30 = 0.03685615262186054
T_MU1 = 0.9543812946736437
S_TAU_R = 0.08949301424696277
OZONE_FACTOR = 0.9788943726967532


def band_at(lam, name="green"):
    return BandDefinition(name, lam - 0.02, lam, lam + 0.02, gain=0.1, offset=0.0, solar_irradiance=1800.0)


VOID = AtmosphereState(0.0, 0.0, 0.0, 0.0)


class TestBandDefinition:
    def test_rejects_unordered_edges(self):
        with pytest.raises(DomainError):
            BandDefinition("x", 0.5, 0.45, 0.6, 0.1, 0.0, 1800.0)

    def test_rejects_nonpositive_gain(self):
        with pytest.raises(DomainError):
            BandDefinition("x", 0.5, 0.55, 0.6, 0.0, 0.0, 1800.0)


class TestRayleigh:
    def test_reference_value(self):
        assert rayleigh_optical_depth(band_at(0.55), 0.0) == pytest.approx(TAU_R_550, rel=1e-12)

    def test_vanishes_with_altitude(self):
        assert rayleigh_optical_depth(band_at(0.55), 1e4) < 1e-300

    def test_pressure_scaling(self):
        tau0 = rayleigh_optical_depth(band_at(0.55), 0.0)
        assert rayleigh_optical_depth(band_at(0.55), 2.0) == pytest.approx(tau0 * math.exp(-2.0 / 8.434))

    def test_band_ordering(self):
        taus = [rayleigh_optical_depth(band_at(lam), 0.0) for lam in (0.48, 0.65, 0.815)]
        assert taus[0] > taus[1] > taus[2]

    @pytest.mark.parametrize("lam", [0.25, 3.5])
    def test_out_of_range_names_band(self, lam):
        band = BandDefinition("odd", lam - 0.01, lam, lam + 0.01, 0.1, 0.0, 100.0)
        with pytest.raises(DomainError, match="odd"):
            rayleigh_optical_depth(band, 0.0)

    @given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
    def test_strictly_decreasing(self, a, b):
        if a == b:
            return
        lo, hi = sorted((a, b))
        c = DEFAULT_CONFIG.constants
        assert _rayleigh_tau(lo, 0.0, c) > _rayleigh_tau(hi, 0.0, c)


class TestAerosolDepth:
    def test_zero_aerosol(self):
        for lam in (0.4, 0.55, 0.9):
            assert aerosol_optical_depth(band_at(lam), AtmosphereState(0.0, 1, 300)) == 0.0

    def test_anchor(self):
        assert aerosol_optical_depth(band_at(0.55), AtmosphereState(0.3, 1, 300)) == 0.3

    def test_power_law(self):
        model = AerosolModel(angstrom_exponent=1.0)
        assert aerosol_optical_depth(band_at(1.1), AtmosphereState(0.3, 1, 300), model) == pytest.approx(0.15)


class TestPathReflectance:
    def test_void_atmosphere(self):
        # With zero optical depth only an infinite elevation removes Rayleigh.
        geom = AcquisitionGeometry(30, 0, 0)
        assert _path_reflectance(0.0, 0.0, geom, CONTINENTAL, DEFAULT_CONFIG.constants) == 0.0

    def test_nadir_molecular(self):
        geom = AcquisitionGeometry(30, 0, 0)
        rho = path_reflectance(band_at(0.55), geom, AtmosphereState(0.0, 0, 0, 0.0))
        assert rho == pytest.approx(RHO_PATH_NADIR_30, rel=1e-9)

    def test_scattering_angle_nadir(self):
        geom = AcquisitionGeometry(30, 0, 0)
        assert math.degrees(math.acos(geom.cos_scattering_angle)) == pytest.approx(150.0)

    def test_band_ordering_molecular(self, bands):
        geom = AcquisitionGeometry(35, 10, 60)
        rho = [path_reflectance(b, geom, AtmosphereState(0.0, 1, 300)) for b in bands]
        assert rho[0] > rho[1] > rho[2] > rho[3]

    def test_degenerate_geometry(self):
        with pytest.raises(GeometryError):
            path_reflectance(band_at(0.55), AcquisitionGeometry(89, 89, 0), VOID)

    @given(st.floats(0, 2), st.floats(0, 2), st.floats(0.01, 0.5))
    def test_increasing_in_depths(self, tau_r, tau_a, step):
        geom = AcquisitionGeometry(40, 20, 120)
        c = DEFAULT_CONFIG.constants
        base = _path_reflectance(tau_r, tau_a, geom, CONTINENTAL, c)
        assert _path_reflectance(tau_r + step, tau_a, geom, CONTINENTAL, c) > base
        assert _path_reflectance(tau_r, tau_a + step, geom, CONTINENTAL, c) > base

    def test_phase_functions_normalised(self):
        # Both phase functions average to 1 over the sphere.
        mu = np.linspace(-1, 1, 200001)
        assert np.trapezoid(rayleigh_phase(mu), mu) / 2 == pytest.approx(1.0, abs=1e-9)
        assert np.trapezoid(henyey_greenstein_phase(mu, 0.64), mu) / 2 == pytest.approx(1.0, abs=1e-6)


class TestTransmittance:
    def test_void(self):
        assert scattering_transmittance(0.0, 0.0, 0.7) == 1.0

    def test_reference(self):
        assert scattering_transmittance(0.0973, 0.0, 1.0) == pytest.approx(math.exp(-0.48 * 0.0973))
        assert scattering_transmittance(TAU_R_550, 0.0, 1.0) == pytest.approx(T_MU1, rel=1e-12)

    def test_airmass_monotone(self):
        assert scattering_transmittance(0.1, 0.2, 1.0) > scattering_transmittance(0.1, 0.2, 0.5)

    @given(st.floats(0, 3), st.floats(0, 3), st.floats(0.05, 1.0))
    def test_range(self, tau_r, tau_a, mu):
        t = scattering_transmittance(tau_r, tau_a, mu)
        assert 0 < t <= 1

    def test_rejects_nonpositive_mu(self):
        with pytest.raises(GeometryError):
            scattering_transmittance(0.1, 0.1, 0.0)


class TestGaseous:
    def test_no_absorbers(self, band_map):
        geom = AcquisitionGeometry(30, 0, 0)
        for band in band_map.values():
            assert gaseous_transmittance(band, geom, AtmosphereState(0.2, 0.0, 0.0)) == 1.0

    def test_nir_without_ozone_term(self, band_map):
        geom = AcquisitionGeometry(30, 0, 0)
        a = gaseous_transmittance(band_map["nir"], geom, AtmosphereState(0.2, 2.0, 0.0))
        b = gaseous_transmittance(band_map["nir"], geom, AtmosphereState(0.2, 2.0, 500.0))
        assert a == b

    def test_ozone_factor(self, band_map):
        geom = AcquisitionGeometry(30, 0, 0)
        assert float(geom.airmass) == pytest.approx(2.1547, abs=1e-4)
        tg = gaseous_transmittance(band_map["green"], geom, AtmosphereState(0.2, 0.0, 300.0))
        assert tg == pytest.approx(OZONE_FACTOR, rel=1e-12)

    def test_missing_coefficients(self):
        cfg = ForwardConfig(gas={})
        with pytest.raises(ConfigError, match="green"):
            gaseous_transmittance(band_at(0.55), AcquisitionGeometry(0, 0, 0), VOID, cfg)


class TestSphericalAlbedo:
    def test_zero(self):
        assert spherical_albedo(0.0, 0.0) == 0.0

    def test_reference(self):
        assert spherical_albedo(0.0973, 0.0) == pytest.approx(0.0895, abs=5e-5)
        assert spherical_albedo(TAU_R_550, 0.0) == pytest.approx(S_TAU_R, rel=1e-12)

    def test_clamped(self):
        assert spherical_albedo(10.0, 10.0) == 0.9


class TestForwardCoefficients:
    def test_void_atmosphere(self):
        # A void atmosphere is approached by an unbounded elevation.
        c = forward_coefficients(band_at(0.55), AcquisitionGeometry(30, 10, 40), AtmosphereState(0, 0, 0, 1e4))
        assert (c.t_gas, c.rho_path, c.t_scatter_total, c.spherical_albedo) == (1.0, 0.0, 1.0, 0.0)

    def test_composition_matches_components(self, band_map):
        band = band_map["blue"]
        geom = AcquisitionGeometry(42, 12, 75)
        atmos = AtmosphereState(0.25, 2.1, 310, 0.4)
        c = forward_coefficients(band, geom, atmos)
        tau_r = rayleigh_optical_depth(band, atmos.elevation)
        tau_a = aerosol_optical_depth(band, atmos)
        assert c.t_gas == gaseous_transmittance(band, geom, atmos)
        assert c.rho_path == path_reflectance(band, geom, atmos)
        assert c.t_scatter_total == scattering_transmittance(tau_r, tau_a, geom.mu_s) * scattering_transmittance(
            tau_r, tau_a, geom.mu_v
        )
        assert c.spherical_albedo == spherical_albedo(tau_r, tau_a)

    def test_deterministic(self, band_map):
        args = (band_map["red"], AcquisitionGeometry(20, 5, 10), AtmosphereState(0.1, 1, 300, 0))
        assert forward_coefficients(*args) == forward_coefficients(*args)

    @settings(max_examples=200)
    @given(
        st.sampled_from(["blue", "green", "red", "nir"]),
        st.floats(0, 70), st.floats(0, 40), st.floats(0, 180),
        st.floats(0, 1.5), st.floats(0, 6), st.floats(0, 500), st.floats(0, 4),
    )
    def test_ranges(self, name, ts, tv, dp, aot, wv, o3, z):
        band = next(b for b in DEFAULT_BANDS if b.name == name)
        c = forward_coefficients(band, AcquisitionGeometry(ts, tv, dp), AtmosphereState(aot, wv, o3, z))
        assert 0 < c.t_gas <= 1
        assert 0 <= c.rho_path < 1
        assert 0 < c.t_scatter_total <= 1
        assert 0 <= c.spherical_albedo < 1


coeff_strategy = st.builds(
    CorrectionCoefficients,
    t_gas=st.floats(0.5, 1.0),
    rho_path=st.floats(0.0, 0.3),
    t_scatter_total=st.floats(0.3, 1.0),
    spherical_albedo=st.floats(0.0, 0.5),
)


class TestForwardToa:
    def test_black_surface(self):
        c = CorrectionCoefficients(0.95, 0.07, 0.8, 0.1)
        assert forward_toa(0.0, c) == 0.95 * 0.07

    def test_identity(self):
        assert forward_toa(0.37, CorrectionCoefficients.identity()) == 0.37

    def test_nonphysical(self):
        with pytest.raises(NonphysicalSurfaceError):
            forward_toa(2.5, CorrectionCoefficients(1.0, 0.0, 1.0, 0.4))

    @given(coeff_strategy)
    def test_black_surface_property(self, c):
        assert forward_toa(0.0, c) == c.t_gas * c.rho_path

    @given(coeff_strategy, st.floats(0.0, 0.9))
    def test_increasing_finite_difference(self, c, rho_s):
        h = 1e-6
        analytic = c.t_gas * c.t_scatter_total / (1 - c.spherical_albedo * rho_s) ** 2
        numeric = (forward_toa(rho_s + h, c) - forward_toa(rho_s - h, c)) / (2 * h)
        assert analytic > 0
        assert numeric == pytest.approx(analytic, rel=1e-6)


class TestCoefficientRecord:
    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            CorrectionCoefficients(1.2, 0.1, 0.9, 0.1)
        with pytest.raises(DomainError):
            CorrectionCoefficients(0.9, 1.0, 0.9, 0.1)
        with pytest.raises(DomainError):
            CorrectionCoefficients(0.9, 0.1, 0.9, 1.0)
