"""
Simplified plane-parallel forward model.

Produces the four coefficients that link surface reflectance to the
apparent (top-of-atmosphere) reflectance of a Lambertian target::

    rho_toa = T_g * (rho_path + T_down * T_up * rho_s / (1 - S * rho_s))

The physics is a set of closed-form approximations rather than a full
multiple-scattering code:

* Rayleigh optical depth from the Hansen & Travis (1974) fit, scaled by the
  surface pressure ratio ``exp(-z / H)``.
* Aerosol optical depth from an Angstrom power law anchored at 550 nm.
* Single-scattering path reflectance with a Rayleigh phase function and a
  Henyey-Greenstein aerosol phase function.
* Direct-plus-diffuse transmittance, ``exp(-((1 - a_r) tau_r + (1 - a_a) tau_a) / mu)``.
* Thin-atmosphere spherical albedo ``min(b_r tau_r + b_a tau_a, S_max)``.
* Band absorption by ozone (linear in column) and water vapour (square-root
  law) along the two-way airmass.

All evaluation is monochromatic at the band centre. Every function
broadcasts over numpy arrays so that LUT construction is a single
vectorised pass.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError, GeometryError, NonphysicalSurfaceError

WAVELENGTH_MIN_UM = 0.3
WAVELENGTH_MAX_UM = 3.0
REFERENCE_WAVELENGTH_UM = 0.55


@dataclass(frozen=True)
class BandDefinition:
    """Spectral band plus linear radiometric calibration.

    Attributes
    ----------
    name : str
        Band key, also used to look up gas absorption coefficients.
    lambda_lo, lambda_center, lambda_hi : float
        Band edges and centre [um].
    gain : float
        Radiance per count [W m-2 sr-1 um-1 / DN].
    offset : float
        Radiance at DN = 0 [W m-2 sr-1 um-1].
    solar_irradiance : float
        Exo-atmospheric solar irradiance F0 [W m-2 um-1].
    """

    name: str
    lambda_lo: float
    lambda_center: float
    lambda_hi: float
    gain: float
    offset: float
    solar_irradiance: float

    def __post_init__(self):
        if not 0 < self.lambda_lo < self.lambda_center < self.lambda_hi:
            raise DomainError(
                f"band {self.name!r}: need 0 < lambda_lo < lambda_center < lambda_hi, "
                f"got {self.lambda_lo}, {self.lambda_center}, {self.lambda_hi}"
            )
        if not self.gain > 0:
            raise DomainError(f"band {self.name!r}: gain must be positive")
        if not self.solar_irradiance > 0:
            raise DomainError(f"band {self.name!r}: solar irradiance must be positive")


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Solar and view geometry in degrees. Fields may be scalars or arrays.

    ``delta_phi = 0`` puts sun and sensor on the same azimuth; the scattering
    angle follows ``cos(Theta) = -mu_s mu_v + sin(theta_s) sin(theta_v) cos(delta_phi)``.
    """

    theta_s: float
    theta_v: float
    delta_phi: float

    def __post_init__(self):
        ts, tv, dp = (np.asarray(v, dtype=float) for v in (self.theta_s, self.theta_v, self.delta_phi))
        if not (np.all(ts >= 0) and np.all(ts < 90)):
            raise GeometryError(f"solar zenith must lie in [0, 90), got {self.theta_s}")
        if not (np.all(tv >= 0) and np.all(tv < 90)):
            raise GeometryError(f"view zenith must lie in [0, 90), got {self.theta_v}")
        if not (np.all(dp >= 0) and np.all(dp <= 180)):
            raise GeometryError(f"relative azimuth must lie in [0, 180], got {self.delta_phi}")

    @property
    def mu_s(self):
        return np.cos(np.deg2rad(self.theta_s))

    @property
    def mu_v(self):
        return np.cos(np.deg2rad(self.theta_v))

    @property
    def airmass(self):
        """Two-way geometric airmass ``1/mu_s + 1/mu_v``."""
        return 1.0 / self.mu_s + 1.0 / self.mu_v

    @property
    def cos_scattering_angle(self):
        ts, tv, dp = (np.deg2rad(v) for v in (self.theta_s, self.theta_v, self.delta_phi))
        c = -np.cos(ts) * np.cos(tv) + np.sin(ts) * np.sin(tv) * np.cos(dp)
        return np.clip(c, -1.0, 1.0)


@dataclass(frozen=True)
class AtmosphereState:
    """Scene atmosphere: AOT at 550 nm, water vapour [g cm-2], ozone [DU], elevation [km]."""

    aot550: float
    water_vapour: float
    ozone: float
    elevation: float = 0.0

    def __post_init__(self):
        for name in ("aot550", "water_vapour", "ozone", "elevation"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not (np.all(np.isfinite(v)) and np.all(v >= 0)):
                raise DomainError(f"atmosphere {name} must be finite and >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class AerosolModel:
    angstrom_exponent: float = 1.3
    single_scattering_albedo: float = 0.89
    asymmetry_g: float = 0.64

    def __post_init__(self):
        if not 0 < self.single_scattering_albedo <= 1:
            raise DomainError("single scattering albedo must lie in (0, 1]")
        if not -1 < self.asymmetry_g < 1:
            raise DomainError("asymmetry parameter must lie in (-1, 1)")


CONTINENTAL = AerosolModel()


@dataclass(frozen=True)
class GasCoefficients:
    """Per-band absorption: ozone [DU-1] and water vapour [(g cm-2)^-1/2]."""

    k_ozone: float
    k_water_vapour: float


# Approximate values for a VIS-NIR four-band sensor at band centre.
# Ozone is Chappuis-dominated (green/red), water vapour only matters in the NIR.
DEFAULT_GAS_COEFFICIENTS = {
    "blue": GasCoefficients(k_ozone=1.0e-5, k_water_vapour=0.0),
    "green": GasCoefficients(k_ozone=3.3e-5, k_water_vapour=0.0),
    "red": GasCoefficients(k_ozone=2.5e-5, k_water_vapour=0.0),
    "nir": GasCoefficients(k_ozone=0.0, k_water_vapour=0.02),
}


@dataclass(frozen=True)
class ForwardConstants:
    rayleigh_a: float = 0.008569
    rayleigh_b: float = 0.0113
    rayleigh_c: float = 0.00013
    scale_height_km: float = 8.434
    diffuse_rayleigh: float = 0.52
    diffuse_aerosol: float = 0.16
    albedo_rayleigh: float = 0.92
    albedo_aerosol: float = 0.33
    albedo_max: float = 0.9
    min_mu_product: float = 0.05


@dataclass(frozen=True)
class ForwardConfig:
    """Everything besides band, geometry and atmosphere that the model reads."""

    constants: ForwardConstants = field(default_factory=ForwardConstants)
    gas: Mapping[str, GasCoefficients] = field(default_factory=lambda: dict(DEFAULT_GAS_COEFFICIENTS))

    def gas_for(self, band: BandDefinition) -> GasCoefficients:
        try:
            return self.gas[band.name]
        except KeyError:
            raise ConfigError(f"no gas absorption coefficients configured for band {band.name!r}") from None

    def digest(self, model: AerosolModel) -> str:
        """Stable SHA-256 of the configuration, stored in LUT files as provenance."""
        doc = {
            "constants": asdict(self.constants),
            "gas": {k: asdict(v) for k, v in sorted(self.gas.items())},
            "aerosol": asdict(model),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


DEFAULT_CONFIG = ForwardConfig()


@dataclass(frozen=True)
class CorrectionCoefficients:
    """Gaseous transmittance, path reflectance, two-way scattering
    transmittance and spherical albedo for one band."""

    t_gas: float
    rho_path: float
    t_scatter_total: float
    spherical_albedo: float

    def __post_init__(self):
        tg, rp, tt, s = (np.asarray(v, dtype=float) for v in self.as_tuple())
        if not all(np.all(np.isfinite(v)) for v in (tg, rp, tt, s)):
            raise DomainError("correction coefficients must be finite")
        if not (np.all(tg > 0) and np.all(tg <= 1)):
            raise DomainError(f"t_gas must lie in (0, 1], got {self.t_gas}")
        if not (np.all(rp >= 0) and np.all(rp < 1)):
            raise DomainError(f"rho_path must lie in [0, 1), got {self.rho_path}")
        if not (np.all(tt > 0) and np.all(tt <= 1)):
            raise DomainError(f"t_scatter_total must lie in (0, 1], got {self.t_scatter_total}")
        if not (np.all(s >= 0) and np.all(s < 1)):
            raise DomainError(f"spherical_albedo must lie in [0, 1), got {self.spherical_albedo}")

    def as_tuple(self):
        return (self.t_gas, self.rho_path, self.t_scatter_total, self.spherical_albedo)

    @classmethod
    def identity(cls) -> "CorrectionCoefficients":
        """Coefficients of a void atmosphere: rho_toa == rho_s."""
        return cls(1.0, 0.0, 1.0, 0.0)


def rayleigh_phase(cos_theta):
    return 0.75 * (1.0 + np.square(cos_theta))


def henyey_greenstein_phase(cos_theta, g):
    """Henyey-Greenstein phase function, normalised to 4 pi like the Rayleigh one."""
    return (1.0 - g * g) / np.power(1.0 + g * g - 2.0 * g * cos_theta, 1.5)


def _rayleigh_tau(wavelength, elevation, c: ForwardConstants):
    lam = np.asarray(wavelength, dtype=float)
    sea_level = c.rayleigh_a * lam**-4 * (1.0 + c.rayleigh_b * lam**-2 + c.rayleigh_c * lam**-4)
    return sea_level * np.exp(-np.asarray(elevation, dtype=float) / c.scale_height_km)


def rayleigh_optical_depth(band: BandDefinition, elevation, config: ForwardConfig = DEFAULT_CONFIG):
    """Molecular optical depth at the band centre for a surface at ``elevation`` km.

    Raises
    ------
    DomainError
        If the band centre lies outside [0.3, 3.0] um.
    """
    lam = band.lambda_center
    if not WAVELENGTH_MIN_UM <= lam <= WAVELENGTH_MAX_UM:
        raise DomainError(
            f"band {band.name!r}: centre {lam} um outside Rayleigh fit range "
            f"[{WAVELENGTH_MIN_UM}, {WAVELENGTH_MAX_UM}]"
        )
    return _rayleigh_tau(lam, elevation, config.constants)


def aerosol_optical_depth(band: BandDefinition, atmos: AtmosphereState, model: AerosolModel = CONTINENTAL):
    ratio = band.lambda_center / REFERENCE_WAVELENGTH_UM
    return np.asarray(atmos.aot550, dtype=float) * ratio ** (-model.angstrom_exponent)


def _path_reflectance(tau_r, tau_a, geom: AcquisitionGeometry, model: AerosolModel, c: ForwardConstants):
    mu_prod = geom.mu_s * geom.mu_v
    if np.any(mu_prod < c.min_mu_product):
        raise GeometryError(
            f"mu_s * mu_v = {np.min(mu_prod):.4g} below floor {c.min_mu_product} "
            f"(theta_s={geom.theta_s}, theta_v={geom.theta_v})"
        )
    cos_t = geom.cos_scattering_angle
    molecular = tau_r * rayleigh_phase(cos_t)
    aerosol = model.single_scattering_albedo * tau_a * henyey_greenstein_phase(cos_t, model.asymmetry_g)
    return (molecular + aerosol) / (4.0 * mu_prod)


def path_reflectance(
    band: BandDefinition,
    geom: AcquisitionGeometry,
    atmos: AtmosphereState,
    model: AerosolModel = CONTINENTAL,
    config: ForwardConfig = DEFAULT_CONFIG,
):
    """Single-scattering reflectance of the atmosphere above a black surface.

    Raises
    ------
    GeometryError
        If ``mu_s * mu_v`` falls below ``config.constants.min_mu_product``.
    """
    tau_r = rayleigh_optical_depth(band, atmos.elevation, config)
    tau_a = aerosol_optical_depth(band, atmos, model)
    return _path_reflectance(tau_r, tau_a, geom, model, config.constants)


def scattering_transmittance(tau_r, tau_a, mu, config: ForwardConfig = DEFAULT_CONFIG):
    """One-way total (direct + diffuse) scattering transmittance along cosine ``mu``."""
    c = config.constants
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise GeometryError("transmittance requires mu > 0")
    tau_r = np.asarray(tau_r, dtype=float)
    tau_a = np.asarray(tau_a, dtype=float)
    if np.any(tau_r < 0) or np.any(tau_a < 0):
        raise DomainError("optical depths must be non-negative")
    extinction = (1.0 - c.diffuse_rayleigh) * tau_r + (1.0 - c.diffuse_aerosol) * tau_a
    return np.exp(-extinction / mu)


def gaseous_transmittance(
    band: BandDefinition,
    geom: AcquisitionGeometry,
    atmos: AtmosphereState,
    config: ForwardConfig = DEFAULT_CONFIG,
):
    gas = config.gas_for(band)
    m = geom.airmass
    ozone = np.exp(-gas.k_ozone * np.asarray(atmos.ozone, dtype=float) * m)
    vapour = np.exp(-gas.k_water_vapour * np.sqrt(np.asarray(atmos.water_vapour, dtype=float) * m))
    return ozone * vapour


def spherical_albedo(tau_r, tau_a, config: ForwardConfig = DEFAULT_CONFIG):
    c = config.constants
    s = c.albedo_rayleigh * np.asarray(tau_r, dtype=float) + c.albedo_aerosol * np.asarray(tau_a, dtype=float)
    return np.minimum(s, c.albedo_max)


def coefficient_arrays(
    band: BandDefinition,
    geom: AcquisitionGeometry,
    atmos: AtmosphereState,
    model: AerosolModel = CONTINENTAL,
    config: ForwardConfig = DEFAULT_CONFIG,
):
    """Broadcast evaluation of the four coefficients without record validation.

    Returns a tuple ``(t_gas, rho_path, t_scatter_total, spherical_albedo)``
    of arrays; LUT construction uses this to fill every node in one pass.
    """
    tau_r = rayleigh_optical_depth(band, atmos.elevation, config)
    tau_a = aerosol_optical_depth(band, atmos, model)
    rho = _path_reflectance(tau_r, tau_a, geom, model, config.constants)
    t_two_way = scattering_transmittance(tau_r, tau_a, geom.mu_s, config) * scattering_transmittance(
        tau_r, tau_a, geom.mu_v, config
    )
    t_gas = gaseous_transmittance(band, geom, atmos, config)
    s = spherical_albedo(tau_r, tau_a, config)
    return t_gas, rho, t_two_way, s


def forward_coefficients(
    band: BandDefinition,
    geom: AcquisitionGeometry,
    atmos: AtmosphereState,
    model: AerosolModel = CONTINENTAL,
    config: ForwardConfig = DEFAULT_CONFIG,
) -> CorrectionCoefficients:
    """Correction coefficients for one band, geometry and atmosphere.

    Raises
    ------
    DomainError
        If the path reflectance reaches 1, where the single-scattering
        approximation no longer holds.
    """
    t_gas, rho, tt, s = coefficient_arrays(band, geom, atmos, model, config)
    if np.any(rho >= 1):
        raise DomainError(f"band {band.name!r}: path reflectance {np.max(rho):.3f} >= 1, atmosphere too thick")
    if np.ndim(t_gas) == 0 and np.ndim(rho) == 0:
        return CorrectionCoefficients(float(t_gas), float(rho), float(tt), float(s))
    return CorrectionCoefficients(t_gas, rho, tt, s)


def forward_toa(rho_s, coeffs: CorrectionCoefficients):
    """Apparent reflectance of a Lambertian surface seen through the atmosphere.

    Raises
    ------
    NonphysicalSurfaceError
        If ``1 - S * rho_s <= 0``.
    """
    rho_s = np.asarray(rho_s, dtype=float)
    denom = 1.0 - coeffs.spherical_albedo * rho_s
    if np.any(denom <= 0):
        raise NonphysicalSurfaceError("1 - S * rho_s must be positive")
    out = coeffs.t_gas * (coeffs.rho_path + coeffs.t_scatter_total * rho_s / denom)
    return float(out) if out.ndim == 0 else out
