"""End-to-end demo: synthetic DN scene -> surface reflectance -> chips, then
recall on the shipped prediction fixtures. Every step goes through the CLI.

    python scripts/run_pipeline.py --out demo_run --seed 0
"""

from __future__ import annotations

import argparse
import datetime as dt
from pathlib import Path

from ardcorr.cli import main as cli
from ardcorr.config import load_config
from ardcorr.correction import RadiometricContext
from ardcorr.lut import load_lut
from ardcorr.radiative_transfer import AcquisitionGeometry, AtmosphereState
from ardcorr.raster_io import write_scene
from ardcorr.synthetic import synthetic_scene

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "eval"


def step(*argv):
    argv = [str(a) for a in argv]
    print("$ ardcorr " + " ".join(argv))
    code = cli(argv)
    if code:
        raise SystemExit(code)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="demo_run")
    ap.add_argument("--config", help="TOML configuration (defaults when absent)")
    ap.add_argument("--seed", type=int, default=0, help="noise seed of the synthetic scene")
    ap.add_argument("--size", type=int, default=512, help="scene height and width in pixels")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_flag = ["--config", args.config] if args.config else []

    step("lut", "build", *cfg_flag, "--out", out / "luts")
    cfg = load_config(args.config)
    ctx = RadiometricContext(cfg.bands, AcquisitionGeometry(35.0, 10.0, 90.0),
                             AtmosphereState(0.15, 1.5, 300.0, 0.2), acquisition_date=dt.date(2023, 3, 12))
    tables = {b.name: load_lut(out / "luts" / f"{b.name}.lut") for b in cfg.bands}
    scene = synthetic_scene(ctx, tables, surface=[0.04, 0.07, 0.06, 0.3],
                            shape=(args.size, args.size), noise=0.01, seed=args.seed)
    write_scene(scene, out / "scene.raw")
    print(f"synthetic scene -> {out / 'scene.raw'}")

    step("correct", *cfg_flag, "--in", out / "scene.raw", "--lut", out / "luts", "--out", out / "boa.raw")
    step("report", "--in", out / "boa.raw.report.json", "--out", out / "report.csv")
    step("chip", *cfg_flag, "--in", out / "boa.raw", "--out", out / "chips")
    step("rasterize", "--in", FIXTURES / "polygons.json", "--template", FIXTURES / "template.raw",
         "--out", out / "truth.raw")
    step("ensemble", "--in", FIXTURES / "model_a", "--in", FIXTURES / "model_b", "--out", out / "ensembled")
    step("merge", "--in", out / "ensembled", "--template", FIXTURES / "template.raw", "--out", out / "merged.raw")
    step("eval", *cfg_flag, "--in", out / "merged.raw", "--truth", out / "truth.raw", "--out", out / "recall.json")


if __name__ == "__main__":
    main()
