"""
Post-processing of segmentation outputs and sparse-label recall.

Chips carry per-class softmax probabilities with shape
``(n_classes, height, width)``. The pipeline order is: average the two
models per chip, max-pool the averaged chips onto the scene canvas,
threshold each class independently, then count TP/FN inside the labeled
extent only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, RasterFormatError, ShapeMismatchError
from .raster_io import LabelMask, RasterScene, read_scene, write_scene

NODATA = -9999.0
DEFAULT_TAU = 0.35
# Column order and titles of the recall report.
REPORT_CLASSES = (("trees", "Trees"), ("buildings", "Buildings"), ("water", "Water"), ("roads", "Roads"))


@dataclass(eq=False)
class PredictionChip:
    origin: tuple  # (col, row) in the canvas
    classes: tuple
    probs: np.ndarray  # (n_classes, height, width) float32

    def __post_init__(self):
        self.origin = tuple(int(v) for v in self.origin)
        self.classes = tuple(self.classes)
        self.probs = np.asarray(self.probs, dtype=np.float32)
        if self.probs.ndim != 3 or self.probs.shape[0] != len(self.classes):
            raise ShapeMismatchError(
                f"probabilities of shape {self.probs.shape} do not match {len(self.classes)} classes"
            )
        if np.any(~(self.probs >= 0) | (self.probs > 1)):
            raise DomainError("class probabilities must lie in [0, 1]")

    @property
    def size(self):
        """``(width, height)`` in pixels."""
        return self.probs.shape[2], self.probs.shape[1]


def ensemble_pair(a: PredictionChip, b: PredictionChip) -> PredictionChip:
    """Per-pixel, per-class mean of two models' probabilities for the same chip."""
    if a.origin != b.origin or a.size != b.size:
        raise ShapeMismatchError(f"chips differ in window: {a.origin}/{a.size} vs {b.origin}/{b.size}")
    if a.classes != b.classes:
        raise ShapeMismatchError(f"chips differ in classes: {a.classes} vs {b.classes}")
    return PredictionChip(a.origin, a.classes, (a.probs + b.probs) * np.float32(0.5))


def threshold_chip(chip: PredictionChip, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Boolean ``probs >= tau`` for every class independently."""
    _check_tau(tau)
    return chip.probs >= np.float32(tau)


def _check_tau(tau):
    if not 0 < tau < 1:
        raise DomainError(f"threshold must lie in (0, 1), got {tau}")


@dataclass(eq=False)
class MergedPrediction:
    classes: tuple
    probs: np.ndarray  # (n_classes, H, W) float32, NODATA where uncovered
    covered: np.ndarray  # (H, W) bool

    def threshold(self, tau: float = DEFAULT_TAU) -> np.ndarray:
        _check_tau(tau)
        return (self.probs >= np.float32(tau)) & self.covered


def _check_chip_set(chips: Sequence[PredictionChip], canvas):
    height, width = canvas
    if not chips:
        raise ShapeMismatchError("empty chip set")
    classes = chips[0].classes
    for c in chips:
        if c.classes != classes:
            raise ShapeMismatchError("class list differs across the chip set")
        col, row = c.origin
        w, h = c.size
        if col < 0 or row < 0 or col + w > width or row + h > height:
            raise ShapeMismatchError(f"chip at {c.origin} of size {c.size} leaves the {width}x{height} canvas")
    return classes


def merge_chips(chips: Sequence[PredictionChip], canvas) -> MergedPrediction:
    """Max-pool chips onto a ``(height, width)`` canvas.

    Each pixel and class takes the maximum over all chips covering it;
    pixels no chip covers are ``NODATA``.
    """
    classes = _check_chip_set(chips, canvas)
    height, width = canvas
    acc = np.full((len(classes), height, width), -np.inf, dtype=np.float32)
    covered = np.zeros((height, width), dtype=bool)
    for c in chips:
        col, row = c.origin
        w, h = c.size
        view = acc[:, row:row + h, col:col + w]
        np.maximum(view, c.probs, out=view)
        covered[row:row + h, col:col + w] = True
    acc[:, ~covered] = NODATA
    return MergedPrediction(classes, acc, covered)


def merge_binary_chips(chips: Sequence[PredictionChip], canvas, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Threshold each chip first, then OR (max-pool) the binaries onto the canvas."""
    classes = _check_chip_set(chips, canvas)
    height, width = canvas
    out = np.zeros((len(classes), height, width), dtype=bool)
    for c in chips:
        col, row = c.origin
        w, h = c.size
        out[:, row:row + h, col:col + w] |= threshold_chip(c, tau)
    return out


@dataclass
class ConfusionCounts:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def recall(self):
        """``TP / (TP + FN)``, or ``None`` when the class has no labelled positives."""
        positives = self.tp + self.fn
        return None if positives == 0 else self.tp / positives


def confusion_counts(pred: np.ndarray, truth: LabelMask) -> ConfusionCounts:
    pred = np.asarray(pred, dtype=bool)
    if pred.shape != truth.mask.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs truth {truth.mask.shape}")
    ext = truth.labeled_extent
    pos = truth.mask & ext
    neg = ext & ~truth.mask
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & pos)),
        fn=int(np.count_nonzero(~pred & pos)),
        fp=int(np.count_nonzero(pred & neg)),
        tn=int(np.count_nonzero(~pred & neg)),
    )


def recall(pred_binary: np.ndarray, classes: Sequence[str], truth: Mapping[str, LabelMask]) -> dict:
    """Per-class recall over the labeled extent.

    ``pred_binary`` has shape ``(n_classes, H, W)`` in the order of
    ``classes``. Classes without ground truth are left out; classes whose
    ground truth has no positive pixel map to ``None``.
    """
    pred_binary = np.asarray(pred_binary, dtype=bool)
    if pred_binary.ndim != 3 or pred_binary.shape[0] != len(classes):
        raise ShapeMismatchError(f"prediction shape {pred_binary.shape} does not match {len(classes)} classes")
    counts = {}
    for k, cls in enumerate(classes):
        if cls in truth:
            counts[cls] = confusion_counts(pred_binary[k], truth[cls])
    return counts


@dataclass
class RecallReport:
    counts: dict  # class -> ConfusionCounts
    tau: float
    model: str = "ensemble"
    input: str = "ARD"

    def recall(self, cls):
        return self.counts[cls].recall if cls in self.counts else None

    def table_row(self) -> dict:
        """One row in the layout Model | Input | Trees | Buildings | Water | Roads, in percent."""
        row = {"Model": self.model, "Input": self.input}
        for cls, title in REPORT_CLASSES:
            r = self.recall(cls)
            row[title] = None if r is None else 100.0 * r
        return row

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "columns": ["Model", "Input"] + [t for _, t in REPORT_CLASSES],
            "rows": [self.table_row()],
            "counts": {c: vars(v) for c, v in self.counts.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        cols = ["Model", "Input"] + [t for _, t in REPORT_CLASSES]
        row = self.table_row()
        cells = [str(row["Model"]), str(row["Input"])]
        cells += ["-" if row[c] is None else f"{row[c]:.4f}" for c in cols[2:]]
        widths = [max(len(c), len(v)) for c, v in zip(cols, cells)]
        line = lambda vals: "| " + " | ".join(v.ljust(w) for v, w in zip(vals, widths)) + " |"
        sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
        return "\n".join([line(cols), sep, line(cells)])


def pair_by_origin(a_chips, b_chips):
    a = {c.origin: c for c in a_chips}
    b = {c.origin: c for c in b_chips}
    if len(a) != len(a_chips) or len(b) != len(b_chips):
        raise ShapeMismatchError("duplicate chip origins within a model's chip set")
    if a.keys() != b.keys():
        raise ShapeMismatchError("the two models do not cover the same chip windows")
    return [(a[k], b[k]) for k in sorted(a)]


def evaluate_pipeline(
    model_a_chips: Sequence[PredictionChip],
    model_b_chips: Sequence[PredictionChip],
    truth: Mapping[str, LabelMask],
    tau: float = DEFAULT_TAU,
    canvas=None,
    threshold_first: bool = False,
    model: str = "ensemble",
    input: str = "ARD",
) -> RecallReport:
    """Ensemble, merge, threshold, then score against sparse labels.

    ``canvas`` defaults to the shape of the truth masks. With
    ``threshold_first`` the chips are thresholded before max-pooling, which
    yields the same binaries.
    """
    _check_tau(tau)
    if canvas is None:
        if not truth:
            raise ShapeMismatchError("canvas is required when no truth masks are given")
        canvas = next(iter(truth.values())).mask.shape
    ensembled = [ensemble_pair(a, b) for a, b in pair_by_origin(model_a_chips, model_b_chips)]
    classes = ensembled[0].classes if ensembled else ()
    if threshold_first:
        binary = merge_binary_chips(ensembled, canvas, tau)
    else:
        binary = merge_chips(ensembled, canvas).threshold(tau)
    return RecallReport(recall(binary, classes, truth), tau, model=model, input=input)


def write_prediction_chip(chip: PredictionChip, path) -> None:
    """Store a chip as a float32 raster; origin and classes live in the sidecar."""
    scene = RasterScene(
        data=chip.probs,
        nodata=None,
        band_names=list(chip.classes),
        metadata={"kind": "prediction_chip", "origin": list(chip.origin), "classes": list(chip.classes)},
    )
    write_scene(scene, path)


def read_prediction_chip(path) -> PredictionChip:
    scene = read_scene(path)
    meta = scene.metadata
    if meta.get("kind") != "prediction_chip":
        raise RasterFormatError(f"{path} is not a prediction chip")
    if scene.sample_type != "float32":
        raise RasterFormatError(f"{path}: prediction chips must be float32")
    return PredictionChip(tuple(meta["origin"]), tuple(meta["classes"]), scene.data)


def read_chip_dir(directory) -> list:
    """All prediction chips (``*.raw`` with sidecars) in a directory, sorted by origin."""
    chips = [read_prediction_chip(p) for p in sorted(Path(directory).glob("*.raw"))]
    return sorted(chips, key=lambda c: (c.origin[1], c.origin[0]))


def merged_to_scene(merged: MergedPrediction) -> RasterScene:
    return RasterScene(
        data=merged.probs,
        nodata=NODATA,
        band_names=list(merged.classes),
        metadata={"kind": "merged_prediction", "classes": list(merged.classes)},
    )


def scene_to_merged(scene: RasterScene) -> MergedPrediction:
    if scene.metadata.get("kind") != "merged_prediction":
        raise RasterFormatError("raster is not a merged prediction")
    covered = np.any(scene.data != NODATA, axis=0)
    return MergedPrediction(tuple(scene.metadata["classes"]), scene.data, covered)
