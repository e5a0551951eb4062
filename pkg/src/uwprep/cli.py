"""Command-line front end.

Subcommands:

* ``enhance``    -- contrast/color enhancement of a single image
* ``stabilize``  -- gray-world channel balancing of a single image
* ``augment``    -- one geometric transform of a single image
* ``pipeline``   -- batch run over a directory, driven by a JSON config
* ``stats``      -- per-channel means and dispersion for one or more images
* ``eval``       -- detection AP against a COCO-style ground-truth file

Exit codes: 0 on success, 1 when individual items failed but the run
completed, 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .annotations import AnnotationError, load_coco
from .augment import broken_mirror, crop, hflip, sharpen
from .detmetrics import (
    EvaluationError,
    evaluate,
    format_eval_table,
    image_stats,
    load_detections,
)
from .iem import IemConfig, enhance
from .imagecore import ImageIOError, load_image, save_image, to_float
from .pipeline import PipelineConfig, PipelineError, run
from .stabilize import stabilize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwprep",
        description="Underwater image enhancement, augmentation and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--p-low", type=float, default=0.001)
    p.add_argument("--p-high", type=float, default=0.999)
    p.add_argument("--no-rgb-prestretch", action="store_true",
                   help="skip the RGB percentile stretch before the Lab steps")

    p = sub.add_parser("stabilize", help="balance channel means of one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--no-restretch", action="store_true",
                   help="skip the per-channel min-max restretch")

    p = sub.add_parser("augment", help="apply one geometric transform")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--op", required=True, choices=["hflip", "broken_mirror", "crop", "sharpen"])
    p.add_argument("--split-col", type=int, default=None,
                   help="broken_mirror split column (default: image midline)")
    p.add_argument("--rect", type=int, nargs=4, metavar=("X", "Y", "W", "H"),
                   help="crop rectangle")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--amount", type=float, default=1.5)

    p = sub.add_parser("pipeline", help="batch-process a directory")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--input-dir")
    p.add_argument("--output-dir")
    p.add_argument("--annotations-in")
    p.add_argument("--annotations-out")
    p.add_argument("--stages", nargs="+")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("stats", help="print channel statistics")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=["human", "machine"], default="human")

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--gt", required=True, help="COCO-style annotation file")
    p.add_argument("--pred", required=True, help="detection result file")
    p.add_argument("--format", choices=["human", "machine"], default="human")
    return parser


def _cmd_enhance(args: argparse.Namespace) -> int:
    cfg = IemConfig(
        p_low=args.p_low,
        p_high=args.p_high,
        rgb_prestretch=not args.no_rgb_prestretch,
    )
    img = load_image(args.input)
    save_image(enhance(img, cfg), args.output)
    return 0


def _cmd_stabilize(args: argparse.Namespace) -> int:
    img = load_image(args.input)
    out, report = stabilize(to_float(img), restretch=not args.no_restretch)
    save_image(out, args.output)
    s = report.stats
    print(f"means: r={s.mean_r:.6f} g={s.mean_g:.6f} b={s.mean_b:.6f}")
    print(f"scales: r={report.scale_r:.4f} g={report.scale_g:.4f} b={report.scale_b:.4f}")
    print(f"blue_dominant: {'yes' if report.blue_dominant else 'no'}")
    print(f"clipped_fraction: {report.clipped_fraction:.6f}")
    if report.low_mean_channels:
        print(f"low_mean_channels: {','.join(report.low_mean_channels)}")
    return 0


def _cmd_augment(args: argparse.Namespace) -> int:
    img = load_image(args.input)
    if args.op == "hflip":
        out, _ = hflip(img)
    elif args.op == "broken_mirror":
        split = args.split_col if args.split_col is not None else img.shape[1] // 2
        out, _ = broken_mirror(img, split)
    elif args.op == "crop":
        if args.rect is None:
            raise ValueError("--op crop requires --rect X Y W H")
        out, _ = crop(img, tuple(args.rect))
    else:
        out = sharpen(img, sigma=args.sigma, amount=args.amount)
    save_image(out, args.output)
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        if not (args.input_dir and args.output_dir):
            raise PipelineError("pipeline needs --config or --input-dir/--output-dir")
        config = PipelineConfig(input_dir=args.input_dir, output_dir=args.output_dir)
    overrides = {
        "input_dir": args.input_dir,
        "output_dir": args.output_dir,
        "annotations_in": args.annotations_in,
        "annotations_out": args.annotations_out,
        "stages": args.stages,
        "seed": args.seed,
        "workers": args.workers,
    }
    changed = {k: v for k, v in overrides.items() if v is not None}
    if changed:
        merged = config.to_dict()
        nested = {
            "iem": merged.pop("iem"),
            "stabilize": merged.pop("stabilize"),
            "sharpen": merged.pop("sharpen"),
            "augment": merged.pop("augment"),
        }
        merged.update(changed)
        config = PipelineConfig.from_dict({**merged, **nested})
    manifest = run(config)
    s = manifest.summary
    print(f"processed {s['processed']}/{s['inputs']} images, "
          f"{s['outputs']} outputs, {s['failed']} failed")
    if s["dispersion_before_mean"] is not None:
        print(f"dispersion: {s['dispersion_before_mean']:.6f} -> "
              f"{s['dispersion_after_mean']:.6f}")
    for failure in manifest.failures:
        print(f"failed: {failure['source']}: {failure['error']}", file=sys.stderr)
    return 1 if manifest.failures else 0


def _cmd_stats(args: argparse.Namespace) -> int:
    rows = []
    failed = 0
    for path in args.inputs:
        try:
            st = image_stats(to_float(load_image(path)))
        except (ImageIOError, ValueError) as exc:
            print(f"failed: {path}: {exc}", file=sys.stderr)
            failed += 1
            continue
        rows.append(
            {
                "file": path,
                "mean_r": st.stats.mean_r,
                "mean_g": st.stats.mean_g,
                "mean_b": st.stats.mean_b,
                "dispersion": st.dispersion,
            }
        )
    if args.format == "machine":
        json.dump(rows, sys.stdout, indent=2, sort_keys=True)
        print()
    else:
        for row in rows:
            print(f"{row['file']}  mean_r={row['mean_r']:.4f} "
                  f"mean_g={row['mean_g']:.4f} mean_b={row['mean_b']:.4f} "
                  f"dispersion={row['dispersion']:.4f}")
    return 1 if failed else 0


def _cmd_eval(args: argparse.Namespace) -> int:
    gt = load_coco(args.gt)
    preds = load_detections(args.pred)
    summary = evaluate(gt, preds)
    if args.format == "machine":
        json.dump(summary.to_dict(), sys.stdout, indent=2, sort_keys=True)
        print()
    else:
        names = {c["id"]: c.get("name", str(c["id"])) for c in gt.categories}
        print(format_eval_table(summary, names=names))
    return 0


_COMMANDS = {
    "enhance": _cmd_enhance,
    "stabilize": _cmd_stabilize,
    "augment": _cmd_augment,
    "pipeline": _cmd_pipeline,
    "stats": _cmd_stats,
    "eval": _cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (PipelineError, AnnotationError, EvaluationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ImageIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
