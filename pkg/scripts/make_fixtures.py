"""Generate the shipped evaluation fixtures.

Writes, under ``--out`` (default ``tests/fixtures/eval``):

- ``template.raw``        1-band 48x48 grid defining pixel geometry
- ``polygons.json``       sparse polygon labels with a labeled extent
- ``truth.raw``           labels rasterized from ``polygons.json``
- ``model_a/``, ``model_b/``  prediction chips (24 px window, stride 12)

The probabilities are noisy copies of the truth masks so every class has
both hits and misses. Everything is drawn from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import shutil
from pathlib import Path

import numpy as np

from ardcorr.ensemble_eval import PredictionChip, write_prediction_chip
from ardcorr.raster_io import (
    RasterScene,
    chip_offsets,
    labels_to_scene,
    rasterize_label_document,
    write_scene,
)

CLASSES = ("trees", "buildings", "water", "roads")
CANVAS = 48
WINDOW = 24
STRIDE = 12
PIXEL = 2.0
ORIGIN = (1000.0, 2000.0)


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def polygon_document():
    """Map-coordinate polygons; y decreases southwards from ``ORIGIN``."""
    ox, oy = ORIGIN
    px = lambda c, r: [ox + c * PIXEL, oy - r * PIXEL]
    ring = lambda pts: [px(c, r) for c, r in pts]
    features = [
        {"class": "trees", "rings": [ring(rect(2, 2, 14, 12))]},
        {"class": "trees", "rings": [ring([(30, 30), (44, 32), (36, 44)])]},
        {"class": "buildings", "rings": [ring(rect(20, 4, 30, 14)), ring(rect(23, 7, 27, 11))]},
        {"class": "buildings", "rings": [ring(rect(4, 34, 12, 42))]},
        {"class": "water", "rings": [ring([(34, 4), (46, 6), (44, 18), (36, 16)])]},
        {"class": "roads", "rings": [ring(rect(0, 22, 48, 25))]},
        {"class": "roads", "rings": [ring(rect(16, 0, 18, 48))]},
    ]
    extent = [ring(rect(0, 0, 48, 28)), ring([(0, 30), (24, 30), (24, 48), (0, 48)])]
    return {"features": features, "labeled_extent": extent}


def template_scene():
    return RasterScene(
        data=np.zeros((1, CANVAS, CANVAS), np.uint16),
        geotransform=(ORIGIN[0], ORIGIN[1], PIXEL, -PIXEL),
        nodata=None,
        band_names=["template"],
    )


def model_chips(truth_planes, rng, bias):
    """Chips whose probabilities follow the truth with model-specific noise."""
    chips = []
    for col, row in chip_offsets(CANVAS, CANVAS, WINDOW, STRIDE):
        base = truth_planes[:, row:row + WINDOW, col:col + WINDOW]
        noise = rng.normal(0.0, 0.25, base.shape)
        probs = np.clip(0.15 + bias * base + noise, 0.0, 1.0)
        chips.append(PredictionChip((col, row), CLASSES, probs.astype(np.float32)))
    return chips


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "eval"))
    ap.add_argument("--seed", type=int, default=20240101)
    args = ap.parse_args(argv)

    out = Path(args.out)
    if out.exists():
        shutil.rmtree(out)
    (out / "model_a").mkdir(parents=True)
    (out / "model_b").mkdir()

    rng = np.random.default_rng(args.seed)
    template = template_scene()
    doc = polygon_document()
    labels = rasterize_label_document(doc, template)
    write_scene(template, out / "template.raw")
    (out / "polygons.json").write_text(json.dumps(doc, indent=1) + "\n")
    write_scene(labels_to_scene(labels, template), out / "truth.raw")

    truth_planes = np.stack([labels[c].mask for c in CLASSES]).astype(float)
    for name, bias in (("model_a", 0.35), ("model_b", 0.25)):
        for chip in model_chips(truth_planes, rng, bias):
            col, row = chip.origin
            write_prediction_chip(chip, out / name / f"pred_r{row:06d}_c{col:06d}.raw")
    for cls, m in labels.items():
        print(f"{cls}: {int(m.mask.sum())} labelled px, extent {int(m.labeled_extent.sum())} px")


if __name__ == "__main__":
    main()
