"""Command-line front end: one subcommand per pipeline stage.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys match the long option names (underscores for dashes); explicit flags
override config values. Exit codes: 0 for success (including partial
batches), 2 for usage or input errors, 3 when a batch produced nothing.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from waxsep.classes import TASK_DETECTION, TASK_SEGMENTATION
from waxsep.cnn import init_model, load_model, save_model
from waxsep.detect import CnnClassifier, SearchStats, estimate_aoi, multiscale_search
from waxsep.extraction import extract_training_pixels, load_capture_products
from waxsep.imaging import InputMode, load_capture_dir, load_manifest, write_image
from waxsep.lightsep import separate_capture
from waxsep.pipeline import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, process_capture, run_pipeline
from waxsep.pixels import PixelDataset
from waxsep.scenesim import default_profiles, generate_dataset
from waxsep.service import serve_annotation
from waxsep.stats import EvaluationConfig, cross_validate, emit_report
from waxsep.training import TrainConfig, train

logger = logging.getLogger(__name__)

# Options that stay None by default but still need a type when they come
# from a config file.
_CONFIG_TYPES = {
    "cap": int,
    "pixel_cap": int,
    "capture_id": str,
    "ui_dir": str,
    "cultivar_count": int,
}


def _read_config(path: str) -> dict:
    """key = value lines; '#' starts a comment; blank lines ignored."""
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(key: str, text: str, default):
    target = _CONFIG_TYPES.get(key)
    if target is None and default is not None:
        target = type(default)
    if target is bool:
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {text!r}")
    if target in (int, float):
        return target(text)
    return text


def _resolve(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Merge defaults, config file values and explicit flags (flags win)."""
    config = _read_config(args.config) if getattr(args, "config", None) else {}
    for key in config:
        if key not in defaults:
            raise ValueError(f"unknown config key {key!r} for this subcommand")
    out = argparse.Namespace()
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            setattr(out, key, flag_value)
        elif key in config:
            setattr(out, key, _coerce(key, config[key], default))
        else:
            setattr(out, key, default)
    return out


def _parse_modes(text: str) -> list:
    return [InputMode.parse(part) for part in text.split(",") if part.strip()]


# --- subcommand implementations ----------------------------------------------


def _cmd_simulate(args) -> int:
    opts = _resolve(
        args,
        {
            "out": None,
            "berries_per_cultivar": 5,
            "cultivar_count": None,
            "seed": 0,
            "width": 96,
            "height": 96,
            "ambient": 0.03,
            "noise_sigma": 0.01,
            "noise_mode": "sensor",
            "label_pixels": 250,
            "bit_depth": 16,
        },
    )
    if not opts.out:
        raise ValueError("simulate needs --out")
    profiles = default_profiles()
    if opts.cultivar_count is not None:
        if not (1 <= opts.cultivar_count <= len(profiles)):
            raise ValueError(f"cultivar_count must be in [1, {len(profiles)}]")
        profiles = profiles[: opts.cultivar_count]
    manifest = generate_dataset(
        opts.out,
        berries_per_cultivar=opts.berries_per_cultivar,
        profiles=profiles,
        seed=opts.seed,
        width=opts.width,
        height=opts.height,
        ambient=opts.ambient,
        noise_sigma=opts.noise_sigma,
        noise_mode=opts.noise_mode,
        target_label_pixels=opts.label_pixels,
        bit_depth=opts.bit_depth,
    )
    print(f"wrote {len(manifest.entries)} captures under {opts.out}")
    return EXIT_OK


def _cmd_separate(args) -> int:
    opts = _resolve(
        args,
        {"capture": None, "out": None, "formulation": "reference", "bit_depth": 16},
    )
    if not opts.capture or not opts.out:
        raise ValueError("separate needs --capture and --out")
    capture = load_capture_dir(opts.capture)
    result = separate_capture(capture, formulation=opts.formulation)
    out = Path(opts.out)
    out.mkdir(parents=True, exist_ok=True)
    planes = result.planes()
    if not planes:
        raise ValueError("capture has no frames to separate (pattern stack and polarization missing)")
    for name, image in sorted(planes.items()):
        write_image(image, out / f"{name}.png", bit_depth=opts.bit_depth)
    (out / "separation.json").write_text(
        json.dumps(
            {
                "formulation": result.formulation,
                "b_value": result.b_value,
                "clamp_fraction": result.clamp_fraction,
                "planes": sorted(planes.keys()),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    print(f"wrote {', '.join(sorted(planes))} to {out}")
    return EXIT_OK


def _cmd_annotate(args) -> int:
    opts = _resolve(
        args,
        {"manifest": None, "port": 8765, "host": "127.0.0.1", "ui_dir": None},
    )
    if not opts.manifest:
        raise ValueError("annotate needs --manifest")
    manifest = load_manifest(opts.manifest)
    server = serve_annotation(manifest, opts.port, host=opts.host, static_dir=opts.ui_dir)
    host, port = server.server_address[:2]
    print(f"annotation service on http://{host}:{port}/ (ctrl-c stops)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return EXIT_OK


def _cmd_extract(args) -> int:
    opts = _resolve(
        args,
        {
            "manifest": None,
            "mode": "IV",
            "task": TASK_DETECTION,
            "cap": None,
            "seed": 0,
            "out": None,
        },
    )
    if not opts.manifest or not opts.out:
        raise ValueError("extract needs --manifest and --out")
    manifest = load_manifest(opts.manifest)
    dataset = extract_training_pixels(
        manifest,
        None,
        InputMode.parse(opts.mode),
        opts.task,
        cap=opts.cap,
        seed=opts.seed,
    )
    path = dataset.save(opts.out)
    counts = ", ".join(str(int(c)) for c in dataset.class_counts())
    print(f"wrote {len(dataset)} pixels ({counts} per class) to {path}")
    return EXIT_OK


def _cmd_train(args) -> int:
    opts = _resolve(
        args,
        {
            "pixels": None,
            "out": None,
            "iterations": 1500,
            "batch_size": 64,
            "lr": 1e-4,
            "momentum": 0.9,
            "weight_decay": 5e-4,
            "schedule_scale": 0.1,
            "seed": 0,
        },
    )
    if not opts.pixels or not opts.out:
        raise ValueError("train needs --pixels and --out")
    dataset = PixelDataset.load(opts.pixels)
    model = init_model(dataset.task, dataset.channels, seed=opts.seed)
    config = TrainConfig(
        iterations=opts.iterations,
        batch_size=opts.batch_size,
        base_lr=opts.lr,
        momentum=opts.momentum,
        weight_decay=opts.weight_decay,
        schedule_scale=opts.schedule_scale,
    )
    history = train(model, dataset, config, seed=opts.seed)
    path = save_model(model, opts.out)
    last = history[-1]
    print(
        f"trained {dataset.task} net on {len(dataset)} pixels "
        f"({opts.iterations} iterations, final loss {last.loss:.4f}); saved to {path}"
    )
    return EXIT_OK


def _select_ids(manifest, capture_id) -> list:
    if capture_id:
        manifest.entry(capture_id)  # raises KeyError for unknown ids
        return [capture_id]
    return sorted(e.capture_id for e in manifest.entries)


def _cmd_detect(args) -> int:
    opts = _resolve(
        args,
        {
            "manifest": None,
            "model": None,
            "mode": "IV",
            "capture_id": None,
            "formulation": "reference",
            "out": None,
        },
    )
    if not opts.manifest or not opts.model:
        raise ValueError("detect needs --manifest and --model")
    manifest = load_manifest(opts.manifest)
    model = load_model(opts.model)
    mode = InputMode.parse(opts.mode)
    ids = _select_ids(manifest, opts.capture_id)
    if not ids:
        print("no captures in the manifest", file=sys.stderr)
        return EXIT_FAILURE
    found = 0
    for cid in ids:
        _, _, stack = load_capture_products(manifest, cid, mode, opts.formulation)
        classifier = CnnClassifier(model, stack)
        stats = SearchStats()
        hit = multiscale_search(classifier, stats=stats)
        if hit is None:
            print(json.dumps({"id": cid, "found": False}, sort_keys=True))
            continue
        aoi = estimate_aoi(classifier, hit)
        doc = {
            "id": cid,
            "found": True,
            "center": [aoi.x, aoi.y],
            "radius": aoi.radius,
            "hit_scale": hit.scale,
            "placements": stats.placements,
            "evaluations": classifier.evaluations,
        }
        print(json.dumps(doc, sort_keys=True))
        if opts.out:
            cap_dir = Path(opts.out) / cid
            cap_dir.mkdir(parents=True, exist_ok=True)
            (cap_dir / "aoi.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        found += 1
    return EXIT_OK if found else EXIT_FAILURE


def _cmd_segment(args) -> int:
    opts = _resolve(
        args,
        {
            "manifest": None,
            "det_model": None,
            "seg_model": None,
            "mode": "IV",
            "capture_id": None,
            "formulation": "reference",
            "out": None,
        },
    )
    if not opts.manifest or not opts.det_model or not opts.seg_model or not opts.out:
        raise ValueError("segment needs --manifest, --det-model, --seg-model and --out")
    manifest = load_manifest(opts.manifest)
    models = {
        TASK_DETECTION: load_model(opts.det_model),
        TASK_SEGMENTATION: load_model(opts.seg_model),
    }
    mode = InputMode.parse(opts.mode)
    ids = _select_ids(manifest, opts.capture_id)
    if not ids:
        print("no captures in the manifest", file=sys.stderr)
        return EXIT_FAILURE
    succeeded = 0
    for cid in ids:
        try:
            outcome = process_capture(manifest, cid, models, mode, opts.out, opts.formulation)
        except Exception as exc:
            print(f"{cid}: failed: {exc}", file=sys.stderr)
            continue
        print(f"{cid}: wax proportion {outcome.wax_proportion:.4f}")
        succeeded += 1
    return EXIT_OK if succeeded else EXIT_FAILURE


def _cmd_evaluate(args) -> int:
    opts = _resolve(
        args,
        {
            "manifest": None,
            "modes": "I,II,III,IV",
            "k": 3,
            "seed": 0,
            "out": None,
            "iterations": 800,
            "batch_size": 64,
            "pixel_cap": 4000,
            "lr": 1e-4,
            "schedule_scale": 0.01,
            "formulation": "reference",
        },
    )
    if not opts.manifest or not opts.out:
        raise ValueError("evaluate needs --manifest and --out")
    manifest = load_manifest(opts.manifest)
    modes = _parse_modes(opts.modes)
    if not modes:
        raise ValueError("no input modes given")
    config = EvaluationConfig(
        k=opts.k,
        seed=opts.seed,
        pixel_cap=opts.pixel_cap,
        iterations=opts.iterations,
        batch_size=opts.batch_size,
        base_lr=opts.lr,
        schedule_scale=opts.schedule_scale,
        formulation=opts.formulation,
    )
    report = cross_validate(manifest, modes, config)
    paths = emit_report(report, opts.out)
    for result in report.mode_results:
        print(
            f"mode {result.mode}: berry {result.berry_accuracy:.4f} "
            f"wax {result.wax_accuracy:.4f} over {result.evaluated} captures"
        )
    if report.correlation is not None:
        print(
            f"correlation (mode {report.correlation_mode}): r={report.correlation.r:.4f} "
            f"p={report.correlation.p:.3e} n={report.correlation.n}"
        )
    print("wrote " + ", ".join(p.name for p in paths) + f" to {opts.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    opts = _resolve(
        args,
        {
            "manifest": None,
            "det_model": None,
            "seg_model": None,
            "mode": "IV",
            "out": None,
            "formulation": "reference",
        },
    )
    if not opts.manifest or not opts.det_model or not opts.seg_model or not opts.out:
        raise ValueError("run needs --manifest, --det-model, --seg-model and --out")
    manifest = load_manifest(opts.manifest)
    models = {
        TASK_DETECTION: load_model(opts.det_model),
        TASK_SEGMENTATION: load_model(opts.seg_model),
    }
    return run_pipeline(manifest, models, InputMode.parse(opts.mode), opts.out, opts.formulation)


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waxsep",
        description="Berry wax phenotyping: simulate, separate, annotate, train, evaluate.",
    )
    parser.add_argument("-v", "--verbose", action="store_const", const=True, help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override its values")

    p = sub.add_parser("simulate", help="render a synthetic dataset with ground truth")
    common(p)
    p.add_argument("--out")
    p.add_argument("--berries-per-cultivar", type=int, dest="berries_per_cultivar")
    p.add_argument("--cultivar-count", type=int, dest="cultivar_count")
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--ambient", type=float)
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    p.add_argument("--noise-mode", choices=("sensor", "frame"), dest="noise_mode")
    p.add_argument("--label-pixels", type=int, dest="label_pixels")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), dest="bit_depth")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("separate", help="split one capture into its illumination planes")
    common(p)
    p.add_argument("--capture", help="capture directory")
    p.add_argument("--out")
    p.add_argument("--formulation", choices=("reference", "as_written"))
    p.add_argument("--bit-depth", type=int, choices=(8, 16), dest="bit_depth")
    p.set_defaults(func=_cmd_separate)

    p = sub.add_parser("annotate", help="serve the annotation API and UI")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--port", type=int)
    p.add_argument("--host")
    p.add_argument("--ui-dir", dest="ui_dir", help="directory with built UI assets")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("extract", help="turn labeled rectangles into training pixels")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--mode", help="I, II, III or IV")
    p.add_argument("--task", choices=(TASK_DETECTION, TASK_SEGMENTATION))
    p.add_argument("--cap", type=int, help="per-class pixel cap")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output .npz path")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train", help="train one pixel classifier")
    common(p)
    p.add_argument("--pixels", help="extracted .npz pixel file")
    p.add_argument("--out", help="model checkpoint path")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--schedule-scale", type=float, dest="schedule_scale")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("detect", help="locate the berry in captures")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--model", help="detection checkpoint")
    p.add_argument("--mode")
    p.add_argument("--id", dest="capture_id", help="one capture id (default: all)")
    p.add_argument("--formulation", choices=("reference", "as_written"))
    p.add_argument("--out", help="optional directory for aoi.json files")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("segment", help="segment wax inside detected regions")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--det-model", dest="det_model")
    p.add_argument("--seg-model", dest="seg_model")
    p.add_argument("--mode")
    p.add_argument("--id", dest="capture_id")
    p.add_argument("--formulation", choices=("reference", "as_written"))
    p.add_argument("--out")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("evaluate", help="k-fold cross-validation with report files")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--modes", help="comma list, e.g. I,IV")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--pixel-cap", type=int, dest="pixel_cap")
    p.add_argument("--lr", type=float)
    p.add_argument("--schedule-scale", type=float, dest="schedule_scale")
    p.add_argument("--formulation", choices=("reference", "as_written"))
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline over a manifest")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--det-model", dest="det_model")
    p.add_argument("--seg-model", dest="seg_model")
    p.add_argument("--mode")
    p.add_argument("--out")
    p.add_argument("--formulation", choices=("reference", "as_written"))
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
