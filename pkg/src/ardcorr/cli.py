"""Batch command-line frontend.

Exit codes:
  0  success
  1  other package error
  2  usage error (unknown flag, missing argument)
  3  invalid configuration
  4  input outside an operation's domain (geometry, atmosphere, reflectance)
  5  LUT build failure or out-of-hull query
  6  unreadable, corrupt or incompatible file (raster, sidecar, LUT)
  7  mismatched shapes, bands or chip sets
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .config import CONFIG_DIR_ENV, load_config
from .correction import RadiometricContext, correct_scene
from .ensemble_eval import (
    ensemble_pair,
    evaluate_pipeline,
    merge_chips,
    merged_to_scene,
    pair_by_origin,
    read_chip_dir,
    recall,
    RecallReport,
    scene_to_merged,
    write_prediction_chip,
)
from .errors import ArdError, ConfigError, RasterFormatError
from .lut import build_lut, load_lut, query, save_lut
from .radiative_transfer import AcquisitionGeometry, AtmosphereState
from .raster_io import (
    chip_scene,
    chip_to_scene,
    labels_to_scene,
    rasterize_label_document,
    read_scene,
    scene_to_labels,
    write_scene,
)

EPILOG = __doc__.split("\n", 1)[1] + f"\nDefault config: ${CONFIG_DIR_ENV}/ardcorr.toml when --config is absent.\n"


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _existing(path, what="input") -> Path:
    p = Path(path)
    if not p.exists():
        raise RasterFormatError(f"{what} {p} does not exist")
    return p


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "tau", None) is not None:
        cfg.tau = args.tau
    if getattr(args, "clamp", None) is not None:
        cfg.clamp = args.clamp
    if getattr(args, "window", None) is not None:
        cfg.window = args.window
    if getattr(args, "stride", None) is not None:
        cfg.stride = args.stride
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg.validate()


def cmd_lut_build(args, out):
    cfg = _config(args)
    bands = [cfg.band(n) for n in args.band] if args.band else list(cfg.bands)
    target = Path(args.out)
    single_file = len(bands) == 1 and target.suffix == ".lut"
    tables = [build_lut(b, cfg.axes, cfg.aerosol, cfg.forward) for b in bands]
    if not single_file:
        target.mkdir(parents=True, exist_ok=True)
    for band, table in zip(bands, tables):
        path = target if single_file else target / f"{band.name}.lut"
        save_lut(table, path)
        print(f"{band.name}: {table.values.shape[:-1]} nodes -> {path}", file=out)


def cmd_lut_query(args, out):
    table = load_lut(_existing(args.lut, "LUT"))
    geom = AcquisitionGeometry(args.theta_s, args.theta_v, args.delta_phi)
    atmos = AtmosphereState(args.aot, args.water_vapour, args.ozone, args.elevation)
    coeffs, clamped = query(table, geom, atmos, clamp=args.clamp_hull)
    doc = {
        "band": table.band.name,
        "t_gas": coeffs.t_gas,
        "rho_path": coeffs.rho_path,
        "t_scatter_total": coeffs.t_scatter_total,
        "spherical_albedo": coeffs.spherical_albedo,
        "clamped_axes": list(clamped),
    }
    print(json.dumps(doc, indent=2), file=out)


def _load_tables(lut_args, band_names, digest=None):
    paths = []
    for item in lut_args:
        p = _existing(item, "LUT")
        paths += sorted(p.glob("*.lut")) if p.is_dir() else [p]
    tables = {}
    for p in paths:
        t = load_lut(p, expected_provenance=digest)
        tables[t.band.name] = t
    missing = [n for n in band_names if n not in tables]
    if missing:
        raise ConfigError(f"no LUT supplied for bands {missing}")
    return tables


def cmd_correct(args, out):
    cfg = _config(args)
    scene = read_scene(_existing(args.input[0]))
    meta = dict(scene.metadata)
    if "bands" not in meta:
        names = scene.band_names or [b.name for b in cfg.bands]
        meta["bands"] = [asdict(cfg.band(n)) for n in names]
    ctx = RadiometricContext.from_metadata(meta)
    tables = _load_tables(args.lut or [cfg.paths.get("lut_dir", "luts")], ctx.band_names,
                          digest=cfg.model_digest if args.check_digest else None)
    boa, report = correct_scene(scene, ctx, tables, policy=cfg.clamp,
                                workers=cfg.workers or None, clamp_hull=cfg.clamp_hull)
    target = Path(args.out)
    write_scene(boa, target)
    _write_text(target.with_name(target.name + ".report.json"), report.to_json() + "\n")
    for name, summary in report.bands.items():
        print(f"{name}: toa mean {summary['toa']['mean']}, boa mean {summary['boa']['mean']}, "
              f"negative {summary['negative']}", file=out)


def cmd_chip(args, out):
    cfg = _config(args)
    scene = read_scene(_existing(args.input[0]))
    chips = chip_scene(scene, cfg.window, cfg.stride)
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    for c in chips:
        col, row = c.origin
        write_scene(chip_to_scene(c, scene), target / f"chip_r{row:06d}_c{col:06d}.raw")
    print(f"{len(chips)} chips of {cfg.window}px, stride {cfg.stride} -> {target}", file=out)


def cmd_rasterize(args, out):
    _config(args)
    try:
        doc = json.loads(_existing(args.input[0], "polygon document").read_text())
    except ValueError as exc:
        raise RasterFormatError(f"polygon document is not valid JSON: {exc}") from exc
    template = read_scene(_existing(args.template, "template raster"))
    labels = rasterize_label_document(doc, template)
    write_scene(labels_to_scene(labels, template), Path(args.out))
    for cls, m in labels.items():
        print(f"{cls}: {int(m.mask.sum())} px, extent {int(m.labeled_extent.sum())} px, "
              f"skipped rings {m.skipped_rings}", file=out)


def cmd_ensemble(args, out):
    _config(args)
    if len(args.input) != 2:
        raise ConfigError("ensemble needs exactly two --in chip directories")
    a = read_chip_dir(_existing(args.input[0]))
    b = read_chip_dir(_existing(args.input[1]))
    pairs = pair_by_origin(a, b)
    merged = [ensemble_pair(x, y) for x, y in pairs]
    target = Path(args.out)
    target.mkdir(parents=True, exist_ok=True)
    for c in merged:
        col, row = c.origin
        write_prediction_chip(c, target / f"pred_r{row:06d}_c{col:06d}.raw")
    print(f"{len(merged)} ensembled chips -> {target}", file=out)


def _canvas(args):
    if args.canvas:
        try:
            h, w = (int(v) for v in args.canvas.lower().split("x"))
        except ValueError:
            raise ConfigError(f"--canvas expects HEIGHTxWIDTH, got {args.canvas!r}") from None
        return h, w
    if args.template:
        t = read_scene(_existing(args.template, "template raster"))
        return t.height, t.width
    raise ConfigError("give --canvas HxW or --template")


def cmd_merge(args, out):
    _config(args)
    chips = read_chip_dir(_existing(args.input[0]))
    canvas = _canvas(args)
    merged = merge_chips(chips, canvas)
    write_scene(merged_to_scene(merged), Path(args.out))
    print(f"{len(chips)} chips merged onto {canvas[0]}x{canvas[1]} -> {args.out}", file=out)


def cmd_eval(args, out):
    cfg = _config(args)
    truth_scene = read_scene(_existing(args.truth, "truth raster"))
    truth = scene_to_labels(truth_scene)
    if len(args.input) == 2:
        report = evaluate_pipeline(
            read_chip_dir(_existing(args.input[0])),
            read_chip_dir(_existing(args.input[1])),
            truth, tau=cfg.tau, canvas=(truth_scene.height, truth_scene.width),
            model=args.model, input=args.input_label,
        )
    elif len(args.input) == 1:
        merged = scene_to_merged(read_scene(_existing(args.input[0])))
        report = RecallReport(recall(merged.threshold(cfg.tau), merged.classes, truth), cfg.tau,
                              model=args.model, input=args.input_label)
    else:
        raise ConfigError("eval takes two chip directories or one merged raster via --in")
    if args.out:
        _write_text(Path(args.out), report.to_json() + "\n")
    print(report.to_text(), file=out)


def cmd_report(args, out):
    path = _existing(args.input[0], "correction report")
    try:
        doc = json.loads(path.read_text())
        bands = doc["bands"]
    except (ValueError, KeyError) as exc:
        raise RasterFormatError(f"{path} is not a correction report: {exc}") from exc
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["band", "toa_min", "toa_mean", "toa_max", "boa_min", "boa_mean", "boa_max",
                     "toa_minus_boa_mean", "negative", "clamped", "saturated", "nodata", "rho_path"])
    for name, s in bands.items():
        toa, boa = s["toa"], s["boa"]
        diff = None if toa["mean"] is None or boa["mean"] is None else toa["mean"] - boa["mean"]
        writer.writerow([name, toa["min"], toa["mean"], toa["max"], boa["min"], boa["mean"], boa["max"],
                         diff, s["negative"], s["clamped"], s["saturated"], s["nodata"],
                         s["coefficients"]["rho_path"]])
    if args.out:
        _write_text(Path(args.out), buf.getvalue())
    out.write(buf.getvalue())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--workers", type=int, help="worker threads (default: all cores)")
    common.add_argument("--seed", type=int, default=0,
                        help="recorded for reproducibility; the core pipeline draws no random numbers")

    parser = argparse.ArgumentParser(
        prog="ardcorr", description="LUT-based atmospheric correction and segmentation post-processing.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    lut = sub.add_parser("lut", help="build or query look-up tables")
    lut_sub = lut.add_subparsers(dest="lut_command", required=True)
    p = lut_sub.add_parser("build", parents=[common], help="build one LUT per band")
    p.add_argument("--band", action="append", help="band name (repeatable; default all)")
    p.add_argument("--out", required=True, help="output directory, or a .lut file for a single band")
    p.set_defaults(func=cmd_lut_build)
    p = lut_sub.add_parser("query", parents=[common], help="interpolate coefficients from a LUT")
    p.add_argument("--lut", required=True)
    p.add_argument("--theta-s", type=float, required=True)
    p.add_argument("--theta-v", type=float, required=True)
    p.add_argument("--delta-phi", type=float, required=True)
    p.add_argument("--aot", type=float, required=True)
    p.add_argument("--water-vapour", type=float, required=True)
    p.add_argument("--ozone", type=float, required=True)
    p.add_argument("--elevation", type=float, default=0.0)
    p.add_argument("--clamp-hull", action="store_true", help="clamp out-of-hull queries instead of failing")
    p.set_defaults(func=cmd_lut_query)

    p = sub.add_parser("correct", parents=[common], help="DN scene to surface reflectance")
    p.add_argument("--in", dest="input", action="append", required=True)
    p.add_argument("--lut", action="append", help="LUT file or directory (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--clamp", choices=("keep", "clamp"), help="negative-reflectance policy")
    p.add_argument("--check-digest", action="store_true",
                   help="reject LUTs built with a different forward-model configuration")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("chip", parents=[common], help="sliding-window chips of a scene")
    p.add_argument("--in", dest="input", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_chip)

    p = sub.add_parser("rasterize", parents=[common], help="polygon document to label masks")
    p.add_argument("--in", dest="input", action="append", required=True)
    p.add_argument("--template", required=True, help="raster whose grid the masks follow")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("ensemble", parents=[common], help="average two models' prediction chips")
    p.add_argument("--in", dest="input", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("merge", parents=[common], help="max-pool prediction chips onto a canvas")
    p.add_argument("--in", dest="input", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--canvas", help="HEIGHTxWIDTH")
    p.add_argument("--template", help="raster giving the canvas size")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("eval", parents=[common], help="recall against sparse labels")
    p.add_argument("--in", dest="input", action="append", required=True,
                   help="two chip directories (models A and B) or one merged raster")
    p.add_argument("--truth", required=True, help="label raster from `rasterize`")
    p.add_argument("--tau", type=float)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--model", default="ensemble")
    p.add_argument("--input-label", default="ARD")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="per-band TOA/BOA statistics as CSV")
    p.add_argument("--in", dest="input", action="append", required=True, help="correction report JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args, out)
    except ArdError as exc:
        print(f"ardcorr: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
