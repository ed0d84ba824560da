"""Synthetic DN scenes produced by running the forward model in reverse."""

from __future__ import annotations

import math

import numpy as np

from .correction import RadiometricContext, scene_coefficients
from .radiative_transfer import forward_toa
from .raster_io import RasterScene


def dn_from_surface(rho_s, band, ctx: RadiometricContext, coeffs):
    """Quantised DN that a Lambertian surface ``rho_s`` produces through ``coeffs``."""
    rho_star = forward_toa(rho_s, coeffs)
    radiance = np.asarray(rho_star) * band.solar_irradiance * float(ctx.geom.mu_s) / (
        math.pi * ctx.earth_sun_distance ** 2
    )
    dn = np.rint((radiance - band.offset) / band.gain)
    return np.clip(dn, 0, (1 << 16) - 1).astype(np.uint16)


def synthetic_scene(
    ctx: RadiometricContext,
    tables,
    surface,
    shape=(256, 256),
    noise: float = 0.0,
    seed: int = 0,
    pixel_size: float = 1.065,
) -> RasterScene:
    """DN scene of ``surface`` reflectance (scalar or per-band sequence) seen through the LUT atmosphere.

    ``noise`` adds Gaussian jitter (in reflectance units) to the surface
    before the forward pass; ``seed`` fixes it.
    """
    rng = np.random.default_rng(seed)
    coeffs = scene_coefficients(ctx, tables)
    per_band = np.broadcast_to(np.asarray(surface, dtype=float), (len(ctx.bands),))
    planes = []
    for band, rho in zip(ctx.bands, per_band):
        field = np.full(shape, rho, dtype=float)
        if noise:
            field = np.clip(field + rng.normal(0.0, noise, shape), 0.0, 0.95)
        planes.append(dn_from_surface(field, band, ctx, coeffs[band.name][0]))
    return RasterScene(
        data=np.stack(planes),
        geotransform=(500000.0, 1900000.0, pixel_size, -pixel_size),
        nodata=None,
        band_names=ctx.band_names,
        metadata=ctx.to_metadata(),
    )
