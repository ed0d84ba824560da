import numpy as np
import pytest

from ardcorr.config import DEFAULT_BANDS
from ardcorr.lut import DEFAULT_AXES, LutAxes, LutTable, build_tables
from ardcorr.radiative_transfer import AcquisitionGeometry, AtmosphereState, forward_coefficients


@pytest.fixture(scope="session")
def bands():
    return DEFAULT_BANDS


@pytest.fixture(scope="session")
def band_map(bands):
    return {b.name: b for b in bands}


@pytest.fixture(scope="session")
def default_tables(bands):
    return build_tables(bands, DEFAULT_AXES)


def random_coefficients(rng, bands, n):
    """Coefficient records from random valid geometry and atmosphere."""
    out = []
    for _ in range(n):
        band = bands[rng.integers(len(bands))]
        geom = AcquisitionGeometry(rng.uniform(0, 70), rng.uniform(0, 40), rng.uniform(0, 180))
        atmos = AtmosphereState(rng.uniform(0, 1.0), rng.uniform(0, 5), rng.uniform(200, 400), rng.uniform(0, 3))
        out.append(forward_coefficients(band, geom, atmos))
    return out


def identity_tables(bands, geom, atmos):
    """Single-node tables with T_g = T = 1 and no path or albedo term."""
    axes = LutAxes.pinned(geom, atmos)
    values = np.array([1.0, 0.0, 1.0, 0.0]).reshape((1,) * 7 + (4,))
    return {b.name: LutTable(axes, b, values, "identity") for b in bands}
