"""
Pipeline configuration: defaults plus an optional TOML document.

Schema (every table optional; unknown keys are rejected)::

    [aerosol]   angstrom_exponent, single_scattering_albedo, asymmetry_g
    [model]     any ForwardConstants field (rayleigh_a, scale_height_km, ...)
    [lut]       theta_s, theta_v, delta_phi, aot550, water_vapour, ozone, elevation
    [chip]      window, stride
    [eval]      tau
    [correct]   clamp ("keep" | "clamp"), workers (0 = all cores), clamp_hull
    [paths]     lut_dir and any other named path, resolved against the file
    [bands.<name>]  lambda_lo, lambda_center, lambda_hi, gain, offset,
                    solar_irradiance, k_ozone, k_water_vapour

A ``[bands.*]`` table whose name matches a default band overrides only the
keys it sets; a new name must give every key. When any band table is
present, only the listed bands are used.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ArdError, ConfigError
from .lut import AXIS_NAMES, DEFAULT_AXES, LutAxes
from .radiative_transfer import (
    CONTINENTAL,
    DEFAULT_GAS_COEFFICIENTS,
    AerosolModel,
    BandDefinition,
    ForwardConfig,
    ForwardConstants,
    GasCoefficients,
)

CONFIG_DIR_ENV = "ARDCORR_CONFIG_DIR"
CONFIG_FILENAME = "ardcorr.toml"

# Placeholder calibration for a four-band VIS-NIR sensor (CARTOSAT-3 MX band
# edges). Gains, offsets and F0 are NOT authoritative: supply the values from
# the product metadata.
DEFAULT_BANDS = (
    BandDefinition("blue", 0.45, 0.485, 0.52, gain=0.18, offset=0.0, solar_irradiance=1970.0),
    BandDefinition("green", 0.52, 0.555, 0.59, gain=0.17, offset=0.0, solar_irradiance=1843.0),
    BandDefinition("red", 0.62, 0.65, 0.68, gain=0.145, offset=0.0, solar_irradiance=1600.0),
    BandDefinition("nir", 0.77, 0.815, 0.86, gain=0.097, offset=0.0, solar_irradiance=1100.0),
)

_BAND_KEYS = {f.name for f in fields(BandDefinition)} - {"name"}
_GAS_KEYS = {f.name for f in fields(GasCoefficients)}


@dataclass
class PipelineConfig:
    bands: tuple = DEFAULT_BANDS
    aerosol: AerosolModel = CONTINENTAL
    forward: ForwardConfig = field(default_factory=ForwardConfig)
    axes: LutAxes = DEFAULT_AXES
    window: int = 256
    stride: int = 128
    tau: float = 0.35
    clamp: str = "keep"
    clamp_hull: bool = True
    workers: int = 0
    paths: dict = field(default_factory=dict)
    source: Path | None = None

    def validate(self) -> "PipelineConfig":
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.clamp not in ("keep", "clamp"):
            raise ConfigError(f"clamp must be 'keep' or 'clamp', got {self.clamp!r}")
        if self.window < 1 or self.stride < 1:
            raise ConfigError("chip window and stride must be >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate band names")
        for b in self.bands:
            self.forward.gas_for(b)
        return self

    def band(self, name: str) -> BandDefinition:
        for b in self.bands:
            if b.name == name:
                return b
        raise ConfigError(f"unknown band {name!r}; configured bands are {[b.name for b in self.bands]}")

    @property
    def model_digest(self) -> str:
        return self.forward.digest(self.aerosol)


def _reject_unknown(table: dict, allowed, where: str):
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(extra)}")


def _parse_bands(doc: dict, forward: ForwardConfig):
    defaults = {b.name: b for b in DEFAULT_BANDS}
    bands, gas = [], dict(forward.gas)
    for name, table in doc.items():
        if not isinstance(table, dict):
            raise ConfigError(f"[bands.{name}] must be a table")
        _reject_unknown(table, _BAND_KEYS | _GAS_KEYS, f"bands.{name}")
        base = asdict(defaults[name]) if name in defaults else {"name": name}
        base.update({k: v for k, v in table.items() if k in _BAND_KEYS})
        missing = _BAND_KEYS - set(base)
        if missing:
            raise ConfigError(f"[bands.{name}] lacks {sorted(missing)}")
        try:
            bands.append(BandDefinition(**base))
        except (ArdError, TypeError) as exc:
            raise ConfigError(f"[bands.{name}]: {exc}") from exc
        gas_keys = {k: v for k, v in table.items() if k in _GAS_KEYS}
        if gas_keys:
            prior = asdict(gas[name]) if name in gas else {}
            prior.update(gas_keys)
            if set(prior) != _GAS_KEYS:
                raise ConfigError(f"[bands.{name}] needs both k_ozone and k_water_vapour")
            gas[name] = GasCoefficients(**prior)
    return tuple(bands), gas


def config_from_dict(doc: dict, base_dir: Path | None = None) -> PipelineConfig:
    _reject_unknown(doc, {"aerosol", "model", "lut", "chip", "eval", "correct", "paths", "bands"}, "top level")
    cfg = PipelineConfig()
    try:
        if "aerosol" in doc:
            cfg.aerosol = AerosolModel(**{**asdict(CONTINENTAL), **doc["aerosol"]})
        constants = ForwardConstants(**doc.get("model", {}))
        forward = ForwardConfig(constants=constants, gas=dict(DEFAULT_GAS_COEFFICIENTS))
        if "bands" in doc:
            bands, gas = _parse_bands(doc["bands"], forward)
            cfg.bands = bands
            forward = replace(forward, gas=gas)
        cfg.forward = forward
        if "lut" in doc:
            _reject_unknown(doc["lut"], AXIS_NAMES, "lut")
            cfg.axes = LutAxes(**{**asdict(DEFAULT_AXES), **doc["lut"]})
        chip = doc.get("chip", {})
        _reject_unknown(chip, {"window", "stride"}, "chip")
        cfg.window = int(chip.get("window", cfg.window))
        cfg.stride = int(chip.get("stride", cfg.stride))
        ev = doc.get("eval", {})
        _reject_unknown(ev, {"tau"}, "eval")
        cfg.tau = float(ev.get("tau", cfg.tau))
        corr = doc.get("correct", {})
        _reject_unknown(corr, {"clamp", "workers", "clamp_hull"}, "correct")
        cfg.clamp = corr.get("clamp", cfg.clamp)
        cfg.workers = int(corr.get("workers", cfg.workers))
        cfg.clamp_hull = bool(corr.get("clamp_hull", cfg.clamp_hull))
    except ConfigError:
        raise
    except (ArdError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    base_dir = base_dir or Path.cwd()
    cfg.paths = {k: (base_dir / v) for k, v in doc.get("paths", {}).items()}
    return cfg.validate()


def load_config(path=None) -> PipelineConfig:
    """Load ``path``, else ``$ARDCORR_CONFIG_DIR/ardcorr.toml`` if it exists, else defaults."""
    if path is None:
        env_dir = os.environ.get(CONFIG_DIR_ENV)
        candidate = Path(env_dir) / CONFIG_FILENAME if env_dir else None
        if candidate is None or not candidate.is_file():
            return PipelineConfig().validate()
        path = candidate
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    cfg = config_from_dict(doc, base_dir=path.parent)
    cfg.source = path
    return cfg
