"""
Digital numbers to surface reflectance.

Per band the chain is DN -> radiance -> apparent reflectance -> surface
reflectance, with a single coefficient set interpolated from the band's LUT
at the scene-mean geometry and atmosphere.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError, GeometryError, RasterFormatError, ShapeMismatchError
from .lut import LutTable, query
from .radiative_transfer import AcquisitionGeometry, AtmosphereState, BandDefinition, CorrectionCoefficients
from .raster_io import RasterScene

NODATA = -9999.0
BLOCK_ROWS = 128
POLICIES = ("keep", "clamp")


def earth_sun_distance(date: dt.date) -> float:
    """Earth-Sun distance in AU from the Spencer (1971) eccentricity series."""
    doy = date.timetuple().tm_yday
    g = 2.0 * math.pi * (doy - 1) / 365.0
    inv_d2 = (
        1.000110
        + 0.034221 * math.cos(g)
        + 0.001280 * math.sin(g)
        + 0.000719 * math.cos(2 * g)
        + 0.000077 * math.sin(2 * g)
    )
    return 1.0 / math.sqrt(inv_d2)


@dataclass(frozen=True)
class RadiometricContext:
    bands: tuple
    geom: AcquisitionGeometry
    atmos: AtmosphereState
    earth_sun_distance: float | None = None
    acquisition_date: dt.date | None = None
    bit_depth: int = 11

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        if not self.bands:
            raise ConfigError("radiometric context needs at least one band")
        if self.earth_sun_distance is None:
            d = earth_sun_distance(self.acquisition_date) if self.acquisition_date else 1.0
            object.__setattr__(self, "earth_sun_distance", d)
        if not 0.98 <= self.earth_sun_distance <= 1.02:
            raise DomainError(f"earth-sun distance {self.earth_sun_distance} AU outside [0.98, 1.02]")
        if not 1 <= self.bit_depth <= 16:
            raise ConfigError("bit depth must lie in [1, 16]")

    @property
    def band_names(self):
        return [b.name for b in self.bands]

    @classmethod
    def from_metadata(cls, meta: Mapping) -> "RadiometricContext":
        """Build from the ``metadata`` block of a scene sidecar."""
        try:
            bands = [BandDefinition(**b) for b in meta["bands"]]
            geom = AcquisitionGeometry(**meta["geometry"])
            atmos = AtmosphereState(**meta["atmosphere"])
        except KeyError as exc:
            raise ConfigError(f"scene metadata lacks {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"bad scene metadata: {exc}") from exc
        date = meta.get("acquisition_date")
        return cls(
            bands=bands,
            geom=geom,
            atmos=atmos,
            earth_sun_distance=meta.get("earth_sun_distance"),
            acquisition_date=dt.date.fromisoformat(date) if date else None,
            bit_depth=int(meta.get("bit_depth", 11)),
        )

    def to_metadata(self) -> dict:
        return {
            "bands": [asdict(b) for b in self.bands],
            "geometry": asdict(self.geom),
            "atmosphere": asdict(self.atmos),
            "earth_sun_distance": self.earth_sun_distance,
            "acquisition_date": self.acquisition_date.isoformat() if self.acquisition_date else None,
            "bit_depth": self.bit_depth,
        }


def dn_to_radiance(dn, band: BandDefinition, bit_depth: int = 11):
    """Linear calibration ``L = gain * dn + offset``.

    Returns ``(radiance, saturated)``; counts above ``2**bit_depth - 1`` are
    clamped to that maximum and flagged in the boolean ``saturated`` array.
    """
    counts = np.asarray(dn)
    if np.issubdtype(counts.dtype, np.signedinteger) or np.issubdtype(counts.dtype, np.floating):
        if np.any(counts < 0):
            raise DomainError("digital numbers must be non-negative")
    top = (1 << bit_depth) - 1
    saturated = counts > top
    counts = np.minimum(counts, top)
    return band.gain * counts.astype(np.float64) + band.offset, saturated


def radiance_to_toa_reflectance(radiance, band: BandDefinition, ctx: RadiometricContext):
    """Apparent reflectance ``pi * L * d**2 / (F0 * mu_s)``."""
    mu_s = float(ctx.geom.mu_s)
    if not mu_s > 0:
        raise GeometryError("solar zenith cosine must be positive")
    scale = math.pi * ctx.earth_sun_distance ** 2 / (band.solar_irradiance * mu_s)
    return np.asarray(radiance, dtype=np.float64) * scale


def invert_boa(rho_star, coeffs: CorrectionCoefficients):
    """Surface reflectance from apparent reflectance by inverting the coupling.

    Pixels where ``1 + S * y <= 0`` have no physical solution and come back
    as NaN.
    """
    if not (np.all(np.asarray(coeffs.t_gas) > 0) and np.all(np.asarray(coeffs.t_scatter_total) > 0)):
        raise DomainError("inversion needs positive gaseous and scattering transmittance")
    y = (np.asarray(rho_star, dtype=np.float64) / coeffs.t_gas - coeffs.rho_path) / coeffs.t_scatter_total
    denom = 1.0 + coeffs.spherical_albedo * y
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_s = np.where(denom > 0, y / denom, np.nan)
    return float(rho_s) if rho_s.ndim == 0 else rho_s


@dataclass
class BandStats:
    """Associative accumulator for one band; merged block by block."""

    negative: int = 0
    clamped: int = 0
    saturated: int = 0
    nodata: int = 0
    nonphysical: int = 0
    toa_count: int = 0
    toa_sum: float = 0.0
    toa_min: float = math.inf
    toa_max: float = -math.inf
    boa_count: int = 0
    boa_sum: float = 0.0
    boa_min: float = math.inf
    boa_max: float = -math.inf

    def merge(self, other: "BandStats") -> "BandStats":
        return BandStats(
            negative=self.negative + other.negative,
            clamped=self.clamped + other.clamped,
            saturated=self.saturated + other.saturated,
            nodata=self.nodata + other.nodata,
            nonphysical=self.nonphysical + other.nonphysical,
            toa_count=self.toa_count + other.toa_count,
            toa_sum=self.toa_sum + other.toa_sum,
            toa_min=min(self.toa_min, other.toa_min),
            toa_max=max(self.toa_max, other.toa_max),
            boa_count=self.boa_count + other.boa_count,
            boa_sum=self.boa_sum + other.boa_sum,
            boa_min=min(self.boa_min, other.boa_min),
            boa_max=max(self.boa_max, other.boa_max),
        )

    def summary(self) -> dict:
        def stat(count, total, lo, hi):
            if count == 0:
                return {"min": None, "mean": None, "max": None}
            return {"min": lo, "mean": total / count, "max": hi}

        return {
            "negative": self.negative,
            "clamped": self.clamped,
            "saturated": self.saturated,
            "nodata": self.nodata,
            "nonphysical": self.nonphysical,
            "toa": stat(self.toa_count, self.toa_sum, self.toa_min, self.toa_max),
            "boa": stat(self.boa_count, self.boa_sum, self.boa_min, self.boa_max),
        }


@dataclass
class CorrectionReport:
    policy: str
    earth_sun_distance: float
    bands: dict = field(default_factory=dict)  # band name -> summary dict

    def to_dict(self) -> dict:
        return {"policy": self.policy, "earth_sun_distance": self.earth_sun_distance, "bands": self.bands}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _correct_block(dn, band, ctx, coeffs, policy, input_nodata):
    stats = BandStats()
    valid = np.ones(dn.shape, dtype=bool) if input_nodata is None else dn != input_nodata
    radiance, saturated = dn_to_radiance(dn, band, ctx.bit_depth)
    rho_star = radiance_to_toa_reflectance(radiance, band, ctx)
    rho_s = invert_boa(rho_star, coeffs)
    nonphysical = valid & ~np.isfinite(rho_s)
    good = valid & ~nonphysical
    negative = good & (rho_s < 0)
    stats.saturated = int(np.count_nonzero(saturated & valid))
    stats.nonphysical = int(np.count_nonzero(nonphysical))
    stats.negative = int(np.count_nonzero(negative))
    if policy == "clamp":
        rho_s = np.where(negative, 0.0, rho_s)
        stats.clamped = stats.negative
    out = np.where(good, rho_s, NODATA).astype(np.float32)
    stats.nodata = int(out.size - np.count_nonzero(good))
    if valid.any():
        toa = rho_star[valid]
        stats.toa_count, stats.toa_sum = toa.size, float(toa.sum())
        stats.toa_min, stats.toa_max = float(toa.min()), float(toa.max())
    if good.any():
        # Statistics describe the stored float32 product.
        boa = out[good].astype(np.float64)
        stats.boa_count, stats.boa_sum = boa.size, float(boa.sum())
        stats.boa_min, stats.boa_max = float(boa.min()), float(boa.max())
    return out, stats


def scene_coefficients(ctx: RadiometricContext, tables: Mapping[str, LutTable], clamp_hull: bool = True):
    """One interpolated coefficient set per band, plus the names of clamped LUT axes."""
    out = {}
    for band in ctx.bands:
        if band.name not in tables:
            raise ConfigError(f"no LUT for band {band.name!r}")
        table = tables[band.name]
        if table.band.lambda_center != band.lambda_center:
            raise ConfigError(f"LUT for band {band.name!r} was built for another band centre")
        out[band.name] = query(table, ctx.geom, ctx.atmos, clamp=clamp_hull)
    return out


def correct_scene(
    scene: RasterScene,
    ctx: RadiometricContext,
    tables: Mapping[str, LutTable],
    policy: str = "keep",
    workers: int | None = None,
    clamp_hull: bool = True,
):
    """Atmospherically correct a DN scene.

    Returns ``(boa_scene, report)``. ``boa_scene`` holds float32 surface
    reflectance with nodata ``-9999``. The result does not depend on
    ``workers``: blocks have a fixed size and their statistics are merged
    in block order.
    """
    if policy not in POLICIES:
        raise ConfigError(f"negative-reflectance policy must be one of {POLICIES}, got {policy!r}")
    if scene.bands != len(ctx.bands):
        raise ShapeMismatchError(f"scene has {scene.bands} bands, context defines {len(ctx.bands)}")
    if scene.band_names is not None and list(scene.band_names) != ctx.band_names:
        raise ShapeMismatchError(f"scene bands {scene.band_names} do not match context {ctx.band_names}")
    if not np.issubdtype(scene.data.dtype, np.unsignedinteger):
        raise RasterFormatError("correction expects unsigned integer DN samples")
    coeffs = scene_coefficients(ctx, tables, clamp_hull)
    workers = workers or os.cpu_count() or 1
    out = np.empty(scene.data.shape, dtype=np.float32)
    jobs = [
        (b, r0, min(r0 + BLOCK_ROWS, scene.height))
        for b in range(scene.bands)
        for r0 in range(0, scene.height, BLOCK_ROWS)
    ]

    def run(job):
        b, r0, r1 = job
        band = ctx.bands[b]
        block, stats = _correct_block(
            scene.data[b, r0:r1], band, ctx, coeffs[band.name][0], policy, scene.nodata
        )
        out[b, r0:r1] = block
        return stats

    if workers == 1:
        partials = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run, jobs))

    report = CorrectionReport(policy=policy, earth_sun_distance=ctx.earth_sun_distance)
    for b, band in enumerate(ctx.bands):
        total = BandStats()
        for (jb, _, _), part in zip(jobs, partials):
            if jb == b:
                total = total.merge(part)
        c, clamped_axes = coeffs[band.name]
        summary = total.summary()
        summary["coefficients"] = dict(zip(("t_gas", "rho_path", "t_scatter_total", "spherical_albedo"), c.as_tuple()))
        summary["lut_clamped_axes"] = list(clamped_axes)
        report.bands[band.name] = summary

    meta = dict(scene.metadata)
    meta["product"] = "boa_reflectance"
    meta["correction"] = {"policy": policy, "earth_sun_distance": ctx.earth_sun_distance}
    boa = RasterScene(
        data=out, geotransform=scene.geotransform, nodata=NODATA,
        band_names=ctx.band_names, metadata=meta,
    )
    return boa, report


def toa_scene(scene: RasterScene, ctx: RadiometricContext) -> RasterScene:
    """Apparent reflectance image (no atmospheric correction), float32."""
    planes = []
    for b, band in enumerate(ctx.bands):
        radiance, _ = dn_to_radiance(scene.data[b], band, ctx.bit_depth)
        planes.append(radiance_to_toa_reflectance(radiance, band, ctx).astype(np.float32))
    return RasterScene(
        data=np.stack(planes), geotransform=scene.geotransform, nodata=NODATA,
        band_names=ctx.band_names, metadata=dict(scene.metadata, product="toa_reflectance"),
    )
