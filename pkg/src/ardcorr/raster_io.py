"""
Raster container, sliding-window chipping and polygon rasterization.

Container: a raw file of little-endian, band-sequential samples plus a JSON
sidecar at ``<data path>.json``. Sidecar fields:

``format``          always ``"ardraster"``
``version``         integer, currently 1
``width``/``height``/``bands``  pixel dimensions
``sample_type``     ``"uint16"`` or ``"float32"``
``geotransform``    ``[origin_x, origin_y, pixel_size_x, pixel_size_y]`` in
                    projected metres (north-up: ``pixel_size_y < 0``)
``nodata``          sentinel value or ``null``
``band_names``      optional list of band keys
``metadata``        free-form object; the correction pipeline reads
                    ``bands`` (calibration), ``geometry``, ``atmosphere``,
                    ``acquisition_date`` and ``earth_sun_distance`` from it
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, RasterFormatError, ShapeMismatchError

SAMPLE_TYPES = {"uint16": np.dtype("<u2"), "float32": np.dtype("<f4")}
CONTAINER_FORMAT = "ardraster"
CONTAINER_VERSION = 1
LABEL_CLASSES = ("buildings", "roads", "trees", "water", "other")


@dataclass(eq=False)
class RasterScene:
    """Planar image: ``data`` has shape ``(bands, height, width)``."""

    data: np.ndarray
    geotransform: tuple = (0.0, 0.0, 1.0, -1.0)
    nodata: float | None = None
    band_names: list | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise ShapeMismatchError(f"scene data must be (bands, height, width), got shape {data.shape}")
        sample_type = next((k for k, v in SAMPLE_TYPES.items() if v == data.dtype.newbyteorder("<")), None)
        if sample_type is None:
            raise RasterFormatError(f"unsupported sample type {data.dtype}")
        self.data = data
        self.geotransform = tuple(float(v) for v in self.geotransform)
        if len(self.geotransform) != 4:
            raise RasterFormatError("geotransform needs 4 numbers")
        if not (self.geotransform[2] > 0 and self.geotransform[3] < 0):
            raise RasterFormatError("geotransform must be north-up (pixel_size_x > 0, pixel_size_y < 0)")
        if self.band_names is not None and len(self.band_names) != data.shape[0]:
            raise ShapeMismatchError(f"{len(self.band_names)} band names for {data.shape[0]} bands")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def sample_type(self) -> str:
        return next(k for k, v in SAMPLE_TYPES.items() if v == self.data.dtype.newbyteorder("<"))

    def pixel_to_geo(self, col, row):
        """Projected coordinates of the upper-left corner of pixel ``(col, row)``."""
        ox, oy, px, py = self.geotransform
        return ox + col * px, oy + row * py

    def pixel_center(self, col, row):
        ox, oy, px, py = self.geotransform
        return ox + (col + 0.5) * px, oy + (row + 0.5) * py

    def sidecar(self) -> dict:
        return {
            "format": CONTAINER_FORMAT,
            "version": CONTAINER_VERSION,
            "width": self.width,
            "height": self.height,
            "bands": self.bands,
            "sample_type": self.sample_type,
            "geotransform": list(self.geotransform),
            "nodata": self.nodata,
            "band_names": self.band_names,
            "metadata": self.metadata,
        }

    def __eq__(self, other):
        if not isinstance(other, RasterScene):
            return NotImplemented
        return (
            self.sidecar() == other.sidecar()
            and self.data.astype(self.data.dtype.newbyteorder("<")).tobytes()
            == other.data.astype(other.data.dtype.newbyteorder("<")).tobytes()
        )


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_scene(scene: RasterScene, path) -> None:
    path = Path(path)
    dtype = SAMPLE_TYPES[scene.sample_type]
    payload = np.ascontiguousarray(scene.data, dtype=dtype).tobytes()
    sidecar = json.dumps(scene.sidecar(), indent=2, sort_keys=True).encode()
    _atomic_write(path, payload)
    _atomic_write(sidecar_path(path), sidecar)


def read_scene(path) -> RasterScene:
    """Load a container written by :func:`write_scene`.

    Raises
    ------
    RasterFormatError
        Missing sidecar, unknown sample type, or a data file whose size does
        not match the declared dimensions.
    """
    path = Path(path)
    meta_path = sidecar_path(path)
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise RasterFormatError(f"missing sidecar {meta_path}") from None
    except (OSError, ValueError) as exc:
        raise RasterFormatError(f"unreadable sidecar {meta_path}: {exc}") from exc
    if meta.get("format") != CONTAINER_FORMAT or meta.get("version") != CONTAINER_VERSION:
        raise RasterFormatError(f"{meta_path} is not a version {CONTAINER_VERSION} {CONTAINER_FORMAT} sidecar")
    try:
        dtype = SAMPLE_TYPES[meta["sample_type"]]
        shape = (int(meta["bands"]), int(meta["height"]), int(meta["width"]))
    except KeyError as exc:
        raise RasterFormatError(f"sidecar {meta_path} lacks or mistypes {exc}") from None
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise RasterFormatError(f"cannot read raster data {path}: {exc}") from exc
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise RasterFormatError(
            f"{path}: sidecar declares {shape[0]}x{shape[1]}x{shape[2]} {meta['sample_type']} "
            f"({expected} bytes) but file holds {len(raw)} bytes"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return RasterScene(
        data=data,
        geotransform=tuple(meta.get("geotransform", (0.0, 0.0, 1.0, -1.0))),
        nodata=meta.get("nodata"),
        band_names=meta.get("band_names"),
        metadata=meta.get("metadata") or {},
    )


@dataclass(eq=False)
class ChipRecord:
    """A window of a parent scene. ``origin`` is ``(col, row)`` in the parent."""

    origin: tuple
    size: tuple  # (width, height)
    geo_origin: tuple
    data: np.ndarray
    padded: bool = False


def _window_offsets(extent: int, window: int, stride: int) -> list:
    offsets = list(range(0, extent - window + 1, stride))
    if offsets[-1] + window < extent:
        offsets.append(extent - window)
    return offsets


def chip_offsets(width: int, height: int, window, stride) -> list:
    """Row-major ``(col, row)`` chip origins; trailing windows are shifted inward."""
    ww, wh = (window, window) if np.isscalar(window) else window
    sx, sy = (stride, stride) if np.isscalar(stride) else stride
    if min(sx, sy) < 1:
        raise DomainError("stride must be >= 1")
    if min(ww, wh) < 1:
        raise DomainError("window must be >= 1")
    if sx > ww or sy > wh:
        raise DomainError(f"stride {sx}x{sy} exceeds window {ww}x{wh}; pixels would be skipped")
    if ww > width or wh > height:
        raise DomainError(f"window {ww}x{wh} larger than scene {width}x{height}")
    return [(c, r) for r in _window_offsets(height, wh, sy) for c in _window_offsets(width, ww, sx)]


def chip_scene(scene: RasterScene, window, stride, allow_oversize: bool = False) -> list:
    """Sliding-window tiling covering every pixel of ``scene``.

    A window larger than the scene is an error unless ``allow_oversize``
    is set, in which case a single chip with the scene centred inside a
    nodata-padded window is returned.
    """
    ww, wh = (window, window) if np.isscalar(window) else window
    if allow_oversize and (ww > scene.width or wh > scene.height):
        if ww < scene.width or wh < scene.height:
            raise DomainError("oversize window must exceed the scene in both dimensions")
        fill = scene.nodata if scene.nodata is not None else 0
        data = np.full((scene.bands, wh, ww), fill, dtype=scene.data.dtype)
        c0, r0 = (ww - scene.width) // 2, (wh - scene.height) // 2
        data[:, r0:r0 + scene.height, c0:c0 + scene.width] = scene.data
        origin = (-c0, -r0)
        return [ChipRecord(origin, (ww, wh), scene.pixel_to_geo(*origin), data, padded=True)]
    chips = []
    for col, row in chip_offsets(scene.width, scene.height, (ww, wh), stride):
        data = scene.data[:, row:row + wh, col:col + ww]
        chips.append(ChipRecord((col, row), (ww, wh), scene.pixel_to_geo(col, row), data))
    return chips


def chip_to_scene(chip: ChipRecord, parent: RasterScene) -> RasterScene:
    """Wrap a chip as a standalone scene carrying its parent offset."""
    ox, oy = chip.geo_origin
    meta = dict(parent.metadata)
    meta["chip"] = {"origin": list(chip.origin), "size": list(chip.size), "padded": chip.padded}
    return RasterScene(
        data=np.array(chip.data),
        geotransform=(ox, oy, parent.geotransform[2], parent.geotransform[3]),
        nodata=parent.nodata,
        band_names=parent.band_names,
        metadata=meta,
    )


@dataclass(eq=False)
class LabelMask:
    class_name: str
    mask: np.ndarray
    labeled_extent: np.ndarray
    skipped_rings: int = 0

    def __post_init__(self):
        if self.class_name not in LABEL_CLASSES:
            raise DomainError(f"unknown class {self.class_name!r}; expected one of {LABEL_CLASSES}")
        self.mask = np.asarray(self.mask, dtype=bool)
        self.labeled_extent = np.asarray(self.labeled_extent, dtype=bool)
        if self.mask.shape != self.labeled_extent.shape:
            raise ShapeMismatchError("mask and labeled_extent differ in shape")
        if np.any(self.mask & ~self.labeled_extent):
            raise DomainError(f"{self.class_name}: mask extends outside labeled_extent")


def _polygon_fill(rings: Sequence, template: RasterScene):
    """Even-odd fill of one polygon (outer ring plus holes) at pixel centres."""
    ox, oy, px, py = template.geotransform
    w, h = template.width, template.height
    xs_c = ox + (np.arange(w) + 0.5) * px
    ys_c = oy + (np.arange(h) + 0.5) * py
    x0s, y0s, x1s, y1s = [], [], [], []
    for ring in rings:
        pts = np.asarray(ring, dtype=np.float64)
        if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
            pts = pts[:-1]
        nxt = np.roll(pts, -1, axis=0)
        x0s.append(pts[:, 0]); y0s.append(pts[:, 1]); x1s.append(nxt[:, 0]); y1s.append(nxt[:, 1])
    out = np.zeros((h, w), dtype=bool)
    if not x0s:
        return out
    x0, y0, x1, y1 = (np.concatenate(v) for v in (x0s, y0s, x1s, y1s))
    keep = y0 != y1
    x0, y0, x1, y1 = x0[keep], y0[keep], x1[keep], y1[keep]
    ylo, yhi = np.minimum(y0, y1), np.maximum(y0, y1)
    for r, yc in enumerate(ys_c):
        # Half-open span rule: a vertex on the scanline is counted once.
        active = (ylo <= yc) & (yc < yhi)
        if not active.any():
            continue
        xa, ya, xb, yb = x0[active], y0[active], x1[active], y1[active]
        cross = np.sort(xa + (yc - ya) * (xb - xa) / (yb - ya))
        out[r] = (np.searchsorted(cross, xs_c, side="left") % 2) == 1
    return out


def _as_polygons(polygons) -> list:
    # A bare ring (list of xy pairs) is promoted to a one-ring polygon.
    out = []
    for poly in polygons:
        arr = np.asarray(poly[0]) if len(poly) else np.empty((0,))
        if arr.ndim == 1:
            out.append([poly])
        else:
            out.append(list(poly))
    return out


def rasterize_polygons(polygons: Iterable, class_name: str, template: RasterScene,
                       labeled_extent: np.ndarray | None = None) -> LabelMask:
    """Binary mask of pixels whose centre falls inside any polygon.

    Each polygon is a list of rings (outer boundary first, holes after) in
    projected metres; rings inside one polygon combine by the even-odd rule
    and polygons combine by union. Rings with fewer than three vertices are
    skipped and counted in ``LabelMask.skipped_rings``.

    ``labeled_extent`` defaults to the mask itself.
    """
    mask = np.zeros((template.height, template.width), dtype=bool)
    skipped = 0
    for rings in _as_polygons(polygons):
        good = []
        for ring in rings:
            pts = [tuple(p) for p in ring]
            if len(pts) > 1 and pts[0] == pts[-1]:
                pts = pts[:-1]
            if len(set(pts)) < 3:
                skipped += 1
            else:
                good.append(pts)
        if good:
            mask |= _polygon_fill(good, template)
    extent = mask.copy() if labeled_extent is None else (np.asarray(labeled_extent, dtype=bool) | mask)
    return LabelMask(class_name, mask, extent, skipped_rings=skipped)


def rasterize_label_document(doc: dict, template: RasterScene) -> dict:
    """Rasterize a polygon document into one :class:`LabelMask` per class.

    Document layout::

        {"features": [{"class": "buildings", "rings": [[[x, y], ...], ...]}, ...],
         "labeled_extent": [[[x, y], ...], ...]}        # optional

    Each feature is one polygon. The labeled extent of every class is the
    rasterized ``labeled_extent`` polygon when given, otherwise the union of
    all labelled pixels of every class.
    """
    by_class: dict = {}
    for feat in doc.get("features", []):
        try:
            cls, rings = feat["class"], feat["rings"]
        except (KeyError, TypeError):
            raise RasterFormatError("every feature needs 'class' and 'rings'") from None
        by_class.setdefault(cls, []).append(rings)
    masks = {cls: rasterize_polygons(polys, cls, template) for cls, polys in by_class.items()}
    if doc.get("labeled_extent"):
        extent = rasterize_polygons([doc["labeled_extent"]], "other", template).mask
    else:
        extent = np.zeros((template.height, template.width), dtype=bool)
        for m in masks.values():
            extent |= m.mask
    return {
        cls: LabelMask(cls, m.mask, m.mask | extent, skipped_rings=m.skipped_rings)
        for cls, m in masks.items()
    }


def labels_to_scene(labels: dict, template: RasterScene) -> RasterScene:
    """Pack label masks as a uint16 raster: bands ``2k`` mask, ``2k+1`` extent."""
    classes = list(labels)
    planes = []
    for cls in classes:
        planes += [labels[cls].mask, labels[cls].labeled_extent]
    data = np.stack(planes).astype(np.uint16) if planes else np.zeros((0, template.height, template.width), np.uint16)
    names = [f"{c}:{part}" for c in classes for part in ("mask", "extent")]
    return RasterScene(
        data=data,
        geotransform=template.geotransform,
        nodata=None,
        band_names=names,
        metadata={"label_classes": classes,
                  "skipped_rings": {c: labels[c].skipped_rings for c in classes}},
    )


def scene_to_labels(scene: RasterScene) -> dict:
    classes = scene.metadata.get("label_classes")
    if classes is None or scene.bands != 2 * len(classes):
        raise RasterFormatError("raster is not a label set (label_classes missing or band count wrong)")
    return {
        cls: LabelMask(cls, scene.data[2 * k] != 0, scene.data[2 * k + 1] != 0)
        for k, cls in enumerate(classes)
    }
