import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ardcorr.correction import (
    NODATA,
    RadiometricContext,
    correct_scene,
    dn_to_radiance,
    earth_sun_distance,
    invert_boa,
    radiance_to_toa_reflectance,
    toa_scene,
)
from ardcorr.errors import ConfigError, DomainError, ShapeMismatchError
from ardcorr.lut import LutAxes, build_tables
from ardcorr.radiative_transfer import (
    AcquisitionGeometry,
    AtmosphereState,
    BandDefinition,
    CorrectionCoefficients,
    forward_coefficients,
    forward_toa,
)
from ardcorr.raster_io import RasterScene
from ardcorr.synthetic import synthetic_scene

from conftest import identity_tables, random_coefficients

GEOM = AcquisitionGeometry(35.0, 10.0, 90.0)
HAZY = AtmosphereState(0.1, 1.0, 300.0, 0.5)


@pytest.fixture(scope="module")
def ctx(bands):
    return RadiometricContext(bands, GEOM, HAZY, acquisition_date=dt.date(2023, 3, 12))


@pytest.fixture(scope="module")
def pinned_tables(bands):
    return build_tables(bands, LutAxes.pinned(GEOM, HAZY))


class TestRadiance:
    def test_zero_dn(self, band_map):
        band = band_map["blue"]
        shifted = BandDefinition("blue", 0.45, 0.485, 0.52, band.gain, 1.5, band.solar_irradiance)
        L, sat = dn_to_radiance(0, shifted)
        assert L == 1.5 and not sat

    def test_linear(self):
        band = BandDefinition("x", 0.5, 0.55, 0.6, gain=0.01, offset=0.0, solar_irradiance=1800)
        assert dn_to_radiance(1000, band)[0] == pytest.approx(10.0)

    def test_saturation_11_bit(self, band_map):
        band = band_map["red"]
        L, sat = dn_to_radiance(np.array([2047, 2048, 4000], dtype=np.uint16), band)
        assert sat.tolist() == [False, True, True]
        assert L[1] == L[0] == L[2] == band.gain * 2047

    def test_negative_dn(self, band_map):
        with pytest.raises(DomainError):
            dn_to_radiance(np.array([-1]), band_map["red"])


class TestToaReflectance:
    def band(self, f0=1850.0):
        return BandDefinition("x", 0.5, 0.55, 0.6, gain=0.1, offset=0.0, solar_irradiance=f0)

    def test_zero(self, bands):
        ctx = RadiometricContext(bands, GEOM, HAZY, earth_sun_distance=1.0)
        assert radiance_to_toa_reflectance(0.0, self.band(), ctx) == 0.0

    def test_normalisation(self, bands):
        ctx = RadiometricContext(bands, GEOM, HAZY, earth_sun_distance=1.0)
        L = 1850.0 * float(GEOM.mu_s) / math.pi
        assert radiance_to_toa_reflectance(L, self.band(), ctx) == pytest.approx(1.0, rel=1e-15)

    def test_reference(self, bands):
        geom = AcquisitionGeometry(math.degrees(math.acos(0.9)), 0, 0)
        ctx = RadiometricContext(bands, geom, HAZY, earth_sun_distance=1.0)
        assert radiance_to_toa_reflectance(100.0, self.band(), ctx) == pytest.approx(0.18868424345884643, rel=1e-12)

    def test_distance_factor(self, bands):
        a = RadiometricContext(bands, GEOM, HAZY, earth_sun_distance=1.0)
        b = RadiometricContext(bands, GEOM, HAZY, earth_sun_distance=1.01)
        ratio = radiance_to_toa_reflectance(50.0, self.band(), b) / radiance_to_toa_reflectance(50.0, self.band(), a)
        assert ratio == pytest.approx(1.01 ** 2)

    def test_earth_sun_distance_seasons(self):
        assert earth_sun_distance(dt.date(2023, 1, 3)) == pytest.approx(0.9833, abs=1e-3)
        assert earth_sun_distance(dt.date(2023, 7, 4)) == pytest.approx(1.0167, abs=1e-3)
        d = [earth_sun_distance(dt.date(2023, 1, 1) + dt.timedelta(days=k)) for k in range(365)]
        assert 0.98 <= min(d) and max(d) <= 1.02

    def test_context_validation(self, bands):
        with pytest.raises(DomainError):
            RadiometricContext(bands, GEOM, HAZY, earth_sun_distance=1.05)
        with pytest.raises(ConfigError):
            RadiometricContext((), GEOM, HAZY)

    def test_metadata_roundtrip(self, ctx):
        assert RadiometricContext.from_metadata(ctx.to_metadata()) == ctx


class TestInvert:
    def test_pure_path(self):
        c = CorrectionCoefficients(0.93, 0.08, 0.8, 0.12)
        assert invert_boa(c.t_gas * c.rho_path, c) == 0.0

    def test_identity(self):
        assert invert_boa(0.2345, CorrectionCoefficients.identity()) == 0.2345

    def test_roundtrip_random(self, bands):
        rng = np.random.default_rng(7)
        for c in random_coefficients(rng, bands, 300):
            rho_s = rng.uniform(0, 0.6, 20)
            assert np.max(np.abs(invert_boa(forward_toa(rho_s, c), c) - rho_s)) <= 1e-12

    def test_nonphysical_is_nan(self):
        c = CorrectionCoefficients(1.0, 0.5, 0.1, 0.5)
        assert math.isnan(invert_boa(0.0, c))

    @given(st.floats(0.0, 0.8), st.floats(1e-4, 0.1))
    def test_strictly_increasing(self, rho_star, step):
        c = CorrectionCoefficients(0.95, 0.06, 0.85, 0.1)
        assert invert_boa(rho_star + step, c) > invert_boa(rho_star, c)


class TestCorrectScene:
    def test_all_zero_dn(self, ctx, pinned_tables):
        scene = RasterScene(np.zeros((4, 8, 8), np.uint16), band_names=ctx.band_names)
        boa, report = correct_scene(scene, ctx, pinned_tables)
        for b, band in enumerate(ctx.bands):
            coeffs = forward_coefficients(band, GEOM, HAZY)
            expected = np.float32(invert_boa(radiance_to_toa_reflectance(band.offset, band, ctx), coeffs))
            assert (boa.data[b] == expected).all()
            assert report.bands[band.name]["negative"] == 64

    def test_identity_atmosphere(self, ctx, bands):
        rng = np.random.default_rng(2)
        scene = RasterScene(rng.integers(0, 2048, (4, 30, 20), dtype=np.uint16), band_names=ctx.band_names)
        boa, _ = correct_scene(scene, ctx, identity_tables(bands, GEOM, HAZY))
        assert np.array_equal(boa.data, toa_scene(scene, ctx).data)

    def test_hazy_scene_reduction(self, ctx, pinned_tables):
        scene = synthetic_scene(ctx, pinned_tables, 0.04, shape=(64, 64), noise=0.01, seed=1)
        _, report = correct_scene(scene, ctx, pinned_tables)
        diff = [report.bands[n]["toa"]["mean"] - report.bands[n]["boa"]["mean"] for n in ctx.band_names]
        assert all(d > 0 for d in diff)
        assert diff[0] == max(diff)

    def test_recovers_surface(self, ctx, pinned_tables):
        scene = synthetic_scene(ctx, pinned_tables, [0.05, 0.08, 0.1, 0.3], shape=(16, 16))
        boa, _ = correct_scene(scene, ctx, pinned_tables)
        for b, rho in enumerate([0.05, 0.08, 0.1, 0.3]):
            # DN quantisation bounds the error.
            assert np.allclose(boa.data[b], rho, atol=2e-3)

    def test_worker_independent(self, ctx, pinned_tables):
        scene = synthetic_scene(ctx, pinned_tables, 0.1, shape=(300, 257), noise=0.05, seed=3)
        results = [correct_scene(scene, ctx, pinned_tables, workers=w) for w in (1, 2, 5)]
        for boa, rep in results[1:]:
            assert boa.data.tobytes() == results[0][0].data.tobytes()
            assert rep.to_json() == results[0][1].to_json()

    def test_negative_policy(self, ctx, pinned_tables):
        scene = synthetic_scene(ctx, pinned_tables, 0.02, shape=(40, 40), noise=0.03, seed=4)
        keep, rk = correct_scene(scene, ctx, pinned_tables, policy="keep")
        clamp, rc = correct_scene(scene, ctx, pinned_tables, policy="clamp")
        for b, name in enumerate(ctx.band_names):
            n_neg = int((keep.data[b] < 0).sum())
            assert rk.bands[name]["negative"] == rc.bands[name]["negative"] == n_neg
            assert rc.bands[name]["clamped"] == n_neg and rk.bands[name]["clamped"] == 0
            assert (clamp.data[b] >= 0).all()
        assert sum(rk.bands[n]["negative"] for n in ctx.band_names) > 0

    def test_saturation_and_nodata_counts(self, ctx, pinned_tables):
        data = np.full((4, 4, 4), 500, np.uint16)
        data[:, 0, 0] = 3000
        data[:, 1, 1] = 65535
        scene = RasterScene(data, nodata=65535, band_names=ctx.band_names)
        boa, rep = correct_scene(scene, ctx, pinned_tables)
        for b, name in enumerate(ctx.band_names):
            assert rep.bands[name]["saturated"] == 1
            assert rep.bands[name]["nodata"] == 1
            assert boa.data[b, 1, 1] == NODATA
        assert boa.nodata == NODATA and boa.data.dtype == np.float32

    def test_band_mismatch(self, ctx, pinned_tables):
        with pytest.raises(ShapeMismatchError):
            correct_scene(RasterScene(np.zeros((3, 2, 2), np.uint16)), ctx, pinned_tables)

    def test_missing_table(self, ctx, pinned_tables):
        tables = dict(pinned_tables)
        del tables["nir"]
        with pytest.raises(ConfigError, match="nir"):
            correct_scene(RasterScene(np.zeros((4, 2, 2), np.uint16)), ctx, tables)

    def test_unknown_policy(self, ctx, pinned_tables):
        with pytest.raises(ConfigError):
            correct_scene(RasterScene(np.zeros((4, 2, 2), np.uint16)), ctx, pinned_tables, policy="zero")
