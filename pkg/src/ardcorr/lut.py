"""
Seven-dimensional look-up tables of correction coefficients.

Axes, in row-major storage order: solar zenith, view zenith, relative
azimuth, AOT at 550 nm, water vapour, ozone, surface elevation. Each node
stores ``(t_gas, rho_path, t_scatter_total, spherical_albedo)``.

Binary layout (all integers and floats little-endian)::

    8 bytes   magic  b"ARDLUT\\r\\n"
    u32       format version (1)
    u32       length of the metadata block
    ...       metadata, UTF-8 JSON: band definition, provenance digest, field names
    u32       number of axes (7)
    per axis  u16 name length, ASCII name, u32 node count, node values as f64
    ...       payload: f64 x 4 per node, row-major over the axes above
    32 bytes  SHA-256 of every preceding byte
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import struct
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ArdError, DomainError, IncompatibleTableError, LutBuildError, OutOfHullError
from .radiative_transfer import (
    CONTINENTAL,
    DEFAULT_CONFIG,
    AcquisitionGeometry,
    AerosolModel,
    AtmosphereState,
    BandDefinition,
    CorrectionCoefficients,
    ForwardConfig,
    coefficient_arrays,
)

MAGIC = b"ARDLUT\r\n"
FORMAT_VERSION = 1
AXIS_NAMES = ("theta_s", "theta_v", "delta_phi", "aot550", "water_vapour", "ozone", "elevation")
FIELD_NAMES = ("t_gas", "rho_path", "t_scatter_total", "spherical_albedo")


class HullClampWarning(UserWarning):
    """A query outside the table hull was clamped onto the boundary."""


@dataclass(frozen=True)
class LutAxes:
    theta_s: tuple
    theta_v: tuple
    delta_phi: tuple
    aot550: tuple
    water_vapour: tuple
    ozone: tuple
    elevation: tuple

    def __post_init__(self):
        for name in AXIS_NAMES:
            nodes = tuple(float(v) for v in np.atleast_1d(getattr(self, name)))
            object.__setattr__(self, name, nodes)
            if len(nodes) == 0:
                raise DomainError(f"LUT axis {name} is empty")
            if not all(np.isfinite(nodes)):
                raise DomainError(f"LUT axis {name} has non-finite nodes")
            if any(b <= a for a, b in zip(nodes, nodes[1:])):
                raise DomainError(f"LUT axis {name} must be strictly increasing")

    def arrays(self):
        return [np.asarray(getattr(self, n), dtype=np.float64) for n in AXIS_NAMES]

    @property
    def shape(self):
        return tuple(len(getattr(self, n)) for n in AXIS_NAMES)

    @classmethod
    def pinned(cls, geom: AcquisitionGeometry, atmos: AtmosphereState) -> "LutAxes":
        """Single-node axes at one geometry and atmosphere."""
        return cls(
            (geom.theta_s,), (geom.theta_v,), (geom.delta_phi,),
            (atmos.aot550,), (atmos.water_vapour,), (atmos.ozone,), (atmos.elevation,),
        )


DEFAULT_AXES = LutAxes(
    theta_s=(0, 10, 20, 30, 40, 45, 50, 55, 60, 62.5, 65, 67.5, 70),
    theta_v=(0, 5, 10, 15, 20, 25, 30),
    delta_phi=(0, 30, 60, 90, 120, 150, 180),
    aot550=tuple(round(0.05 * k, 2) for k in range(1, 17)),
    water_vapour=(0.5, 1, 2, 3, 4),
    ozone=(250, 300, 350),
    elevation=(0, 0.5, 1, 2),
)


@dataclass(frozen=True, eq=False)
class LutTable:
    """Coefficient table for one band. ``values`` has shape ``axes.shape + (4,)``."""

    axes: LutAxes
    band: BandDefinition
    values: np.ndarray
    provenance: str

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype="<f8")
        if values.shape != self.axes.shape + (4,):
            raise DomainError(f"LUT values shape {values.shape} does not match axes {self.axes.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, LutTable):
            return NotImplemented
        return (
            self.axes == other.axes
            and self.band == other.band
            and self.provenance == other.provenance
            and self.values.tobytes() == other.values.tobytes()
        )

    def node(self, index: Sequence[int]) -> CorrectionCoefficients:
        return CorrectionCoefficients(*(float(v) for v in self.values[tuple(index)]))


def _node_grids(axes: LutAxes):
    return np.meshgrid(*axes.arrays(), indexing="ij")


def _first_bad_node(mask, axes: LutAxes):
    idx = np.unravel_index(int(np.argmax(mask)), mask.shape)
    return {name: getattr(axes, name)[i] for name, i in zip(AXIS_NAMES, idx)}


def build_lut(
    band: BandDefinition,
    axes: LutAxes = DEFAULT_AXES,
    model: AerosolModel = CONTINENTAL,
    config: ForwardConfig = DEFAULT_CONFIG,
) -> LutTable:
    """Evaluate the forward model at every node of ``axes``.

    Raises
    ------
    LutBuildError
        If some node violates a forward-model precondition; the message names
        the first such node in storage order.
    """
    ts, tv, dp, aot, wv, o3, z = _node_grids(axes)
    mu_prod = np.cos(np.deg2rad(ts)) * np.cos(np.deg2rad(tv))
    bad = (ts < 0) | (ts >= 90) | (tv < 0) | (tv >= 90) | (dp < 0) | (dp > 180)
    bad |= (aot < 0) | (wv < 0) | (o3 < 0) | (z < 0)
    bad |= ~bad & (mu_prod < config.constants.min_mu_product)
    if bad.any():
        raise LutBuildError(f"band {band.name!r}: invalid forward-model input at node {_first_bad_node(bad, axes)}")
    try:
        parts = coefficient_arrays(
            band, AcquisitionGeometry(ts, tv, dp), AtmosphereState(aot, wv, o3, z), model, config
        )
    except ArdError as exc:
        raise LutBuildError(f"band {band.name!r}: {exc}") from exc
    values = np.stack([np.broadcast_to(p, ts.shape) for p in parts], axis=-1)
    tg, rho, tt, s = np.moveaxis(values, -1, 0)
    bad = ~np.isfinite(values).all(axis=-1)
    bad |= (tg <= 0) | (tg > 1) | (rho < 0) | (rho >= 1) | (tt <= 0) | (tt > 1) | (s < 0) | (s >= 1)
    if bad.any():
        raise LutBuildError(
            f"band {band.name!r}: coefficients out of range at node {_first_bad_node(bad, axes)}"
        )
    return LutTable(axes=axes, band=band, values=values, provenance=config.digest(model))


def _query_vector(geom: AcquisitionGeometry, atmos: AtmosphereState):
    return np.array(
        [geom.theta_s, geom.theta_v, geom.delta_phi, atmos.aot550, atmos.water_vapour, atmos.ozone, atmos.elevation],
        dtype=np.float64,
    )


def interpolate_points(table: LutTable, points, clamp: bool = False):
    """Multilinear interpolation at ``points`` of shape ``(N, 7)``.

    Returns ``(values, clamped)`` where ``values`` has shape ``(N, 4)`` and
    ``clamped`` is a tuple naming the axes on which any point was clamped.

    Raises
    ------
    OutOfHullError
        If a point leaves the hull and ``clamp`` is false.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != len(AXIS_NAMES):
        raise DomainError(f"query points need {len(AXIS_NAMES)} columns, got {pts.shape[1]}")
    flat = table.values.reshape(-1, 4)
    strides = np.array(table.values.strides[:-1]) // table.values.strides[-2]
    clamped = []
    base = np.zeros(len(pts), dtype=np.int64)
    live = []  # (stride, weight of upper node) per non-pinned axis
    for d, (name, nodes) in enumerate(zip(AXIS_NAMES, table.axes.arrays())):
        x = pts[:, d]
        lo, hi = nodes[0], nodes[-1]
        outside = (x < lo) | (x > hi) | ~np.isfinite(x)
        if outside.any():
            if not clamp:
                bad = x[np.argmax(outside)]
                raise OutOfHullError(name, float(bad), lo, hi)
            clamped.append(name)
            x = np.clip(np.nan_to_num(x, nan=lo), lo, hi)
        if len(nodes) == 1:
            continue
        i = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
        t = (x - nodes[i]) / (nodes[i + 1] - nodes[i])
        base += i * strides[d]
        live.append((strides[d], t))
    out = np.zeros((len(pts), 4))
    for corner in itertools.product((0, 1), repeat=len(live)):
        w = np.ones(len(pts))
        offset = base.copy()
        for bit, (stride, t) in zip(corner, live):
            if bit:
                w = w * t
                offset += stride
            else:
                w = w * (1.0 - t)
        out += w[:, None] * flat[offset]
    return out, tuple(clamped)


def query(table: LutTable, geom: AcquisitionGeometry, atmos: AtmosphereState, clamp: bool = False):
    """Interpolated coefficients plus the names of any clamped axes."""
    values, clamped = interpolate_points(table, _query_vector(geom, atmos)[None, :], clamp=clamp)
    return CorrectionCoefficients(*(float(v) for v in values[0])), clamped


def interpolate(
    table: LutTable, geom: AcquisitionGeometry, atmos: AtmosphereState, clamp: bool = False
) -> CorrectionCoefficients:
    """Coefficients at one scene geometry and atmosphere.

    With ``clamp=True`` an out-of-hull query is moved onto the hull and a
    :class:`HullClampWarning` is emitted.
    """
    coeffs, clamped = query(table, geom, atmos, clamp=clamp)
    if clamped:
        warnings.warn(HullClampWarning(f"query clamped on axes {', '.join(clamped)}"), stacklevel=2)
    return coeffs


def to_bytes(table: LutTable) -> bytes:
    meta = json.dumps(
        {"band": asdict(table.band), "provenance": table.provenance, "fields": list(FIELD_NAMES)},
        sort_keys=True,
    ).encode()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta, struct.pack("<I", len(AXIS_NAMES))]
    for name, nodes in zip(AXIS_NAMES, table.axes.arrays()):
        raw = name.encode("ascii")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<I", len(nodes)), nodes.astype("<f8").tobytes()]
    parts.append(table.values.astype("<f8", copy=False).tobytes(order="C"))
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def from_bytes(blob: bytes, expected_provenance: str | None = None) -> LutTable:
    """Parse a table; every failure surfaces as :class:`IncompatibleTableError`."""
    if len(blob) < len(MAGIC) + 32 or not blob.startswith(MAGIC):
        raise IncompatibleTableError("not a LUT file (bad magic or too short)")
    body, checksum = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise IncompatibleTableError("LUT checksum mismatch (truncated or corrupt file)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise IncompatibleTableError("LUT file truncated")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    version, meta_len = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise IncompatibleTableError(f"LUT format version {version}, expected {FORMAT_VERSION}")
    try:
        meta = json.loads(take(meta_len).decode())
        band = BandDefinition(**meta["band"])
    except (ValueError, KeyError, TypeError, ArdError) as exc:
        raise IncompatibleTableError(f"bad LUT metadata: {exc}") from exc
    if tuple(meta.get("fields", ())) != FIELD_NAMES:
        raise IncompatibleTableError("LUT stores unexpected coefficient fields")
    (n_axes,) = struct.unpack("<I", take(4))
    if n_axes != len(AXIS_NAMES):
        raise IncompatibleTableError(f"LUT has {n_axes} axes, expected {len(AXIS_NAMES)}")
    axes = {}
    for expected in AXIS_NAMES:
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("ascii", errors="replace")
        if name != expected:
            raise IncompatibleTableError(f"LUT axis {name!r} where {expected!r} was expected")
        (count,) = struct.unpack("<I", take(4))
        axes[name] = tuple(np.frombuffer(take(8 * count), dtype="<f8").tolist())
    try:
        lut_axes = LutAxes(**axes)
    except DomainError as exc:
        raise IncompatibleTableError(f"bad LUT axes: {exc}") from exc
    n_values = int(np.prod(lut_axes.shape)) * 4
    values = np.frombuffer(take(8 * n_values), dtype="<f8").reshape(lut_axes.shape + (4,))
    if pos != len(body):
        raise IncompatibleTableError("trailing bytes after LUT payload")
    provenance = meta.get("provenance", "")
    if expected_provenance is not None and provenance != expected_provenance:
        raise IncompatibleTableError(
            f"LUT built with model digest {provenance[:12]}, current configuration is {expected_provenance[:12]}"
        )
    return LutTable(axes=lut_axes, band=band, values=values.copy(), provenance=provenance)


def save_lut(table: LutTable, path) -> None:
    """Write atomically: the destination never holds a partial table."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(table))
    os.replace(tmp, path)


def load_lut(path, expected_provenance: str | None = None) -> LutTable:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IncompatibleTableError(f"cannot read LUT {path}: {exc}") from exc
    return from_bytes(blob, expected_provenance)


def build_tables(
    bands: Sequence[BandDefinition],
    axes: LutAxes = DEFAULT_AXES,
    model: AerosolModel = CONTINENTAL,
    config: ForwardConfig = DEFAULT_CONFIG,
) -> Mapping[str, LutTable]:
    return {b.name: build_lut(b, axes, model, config) for b in bands}
