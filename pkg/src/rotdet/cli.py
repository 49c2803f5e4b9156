"""Command-line interface.

Subcommands: eval, iou, nms, synth, fit-demo, ablation, hist.  Outputs are
pure functions of the flags and input files; human tables print 4 decimals,
machine output (--format json) keeps full precision.

Exit codes: 0 success, 2 usage error (argparse), 3 missing input file,
4 file format or schema error, 1 anything else.
"""

from __future__ import annotations

import argparse
import math
import sys

from .codec import ConfigError
from .dataio import (
    AnnotationFormatError,
    SynthConfig,
    CorruptionConfig,
    generate_scene,
    load_annotations,
    load_predictions,
    save_annotations,
    save_predictions,
)
from .evaluation import aspect_ratio_histogram, evaluate, export_pr_csv
from .geometry import InvalidBoxError, RotatedBox, iou
from .losses import AngleLossKind
from .postprocess import NmsConfig, nms
from .trainer import FitConfig, demo_gt, fit, synthetic_ablation, trajectory_to_csv
from .codec import CodecParams

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_FILE = 3
EXIT_FORMAT = 4


def _parse_box(text: str, degrees: bool) -> RotatedBox:
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError(
            f"expected cx,cy,w,h,angle (5 comma-separated numbers), got {text!r}"
        )
    cx, cy, w, h, angle = (float(p) for p in parts)
    if degrees:
        angle = math.radians(angle)
    return RotatedBox(cx, cy, w, h, angle)


def _cmd_eval(args) -> int:
    annotations = load_annotations(args.gt)
    predictions = load_predictions(args.pred)
    report = evaluate(
        annotations,
        predictions,
        iou_thresh=args.iou,
        conf=args.conf,
        per_video=not args.pooled,
    )
    if args.format == "json":
        text = report.to_json()
    else:
        text = report.to_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    if args.pr_csv:
        export_pr_csv(report.pr_curve, args.pr_csv)
    return EXIT_OK


def _cmd_iou(args) -> int:
    degrees = not args.radians
    a = _parse_box(args.box_a, degrees)
    b = _parse_box(args.box_b, degrees)
    print(f"{iou(a, b):.4f}")
    return EXIT_OK


def _cmd_nms(args) -> int:
    predictions = load_predictions(args.pred)
    cfg = NmsConfig(conf_threshold=args.conf, iou_threshold=args.iou_nms)
    kept_total = 0
    for frames in predictions.videos.values():
        for key in list(frames):
            kept = nms(frames[key], cfg)
            kept_total += len(kept)
            frames[key] = tuple(kept)
    save_predictions(predictions, args.out)
    print(f"kept {kept_total} detections -> {args.out}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    lo, hi = (int(x) for x in args.people.split(","))
    cfg = SynthConfig(
        seed=args.seed,
        frames=args.frames,
        people=(lo, hi),
        image_size=args.size,
        pose_noise=args.pose_noise,
        corruption=CorruptionConfig() if args.corrupt else None,
    )
    annotations, detections = generate_scene(cfg)
    save_annotations(annotations, args.out)
    print(f"wrote {args.out}")
    if detections is not None:
        if not args.pred_out:
            raise ConfigError("--corrupt requires --pred-out")
        save_predictions(detections, args.pred_out)
        print(f"wrote {args.pred_out}")
    return EXIT_OK


def _cmd_fit_demo(args) -> int:
    kind = AngleLossKind.from_name(args.loss)
    params = None if args.unbounded else CodecParams(args.alpha, args.beta)
    cfg = FitConfig(
        kind=kind,
        params=params,
        lr=args.lr,
        steps=args.steps,
        delta_theta=args.delta_theta,
        seed=args.seed,
    )
    traj = fit(cfg, demo_gt())
    if args.out:
        trajectory_to_csv(traj, args.out)
        print(f"wrote {args.out}")
    status = "failed" if traj.failed else "ok"
    print(f"status            {status}")
    print(f"final angle error {traj.final_angle_error:.4f}")
    print(f"final loss        {traj.losses[-1].total:.4f}")
    return EXIT_OK


def _cmd_ablation(args) -> int:
    report = synthetic_ablation(
        seed=args.seed,
        frames=args.frames,
        lr=args.lr,
        steps=args.steps,
        steps_l2=args.steps_l2,
    )
    text = report.to_json() if args.format == "json" else report.to_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_hist(args) -> int:
    predictions = load_predictions(args.pred)
    dets = [d for frames in predictions.videos.values() for ds in frames.values() for d in ds]
    hist = aspect_ratio_histogram(dets, bins=args.bins)
    if hist.fraction_tall is None:
        print("no detections")
        return EXIT_OK
    print(f"detections        {hist.n}")
    print(f"fraction h/w >= 1 {hist.fraction_tall:.4f}")
    for k in range(len(hist.counts)):
        print(f"[{hist.edges[k]:7.3f}, {hist.edges[k + 1]:7.3f})  {hist.counts[k]}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("bin_lo,bin_hi,count\n")
            for k in range(len(hist.counts)):
                fh.write(f"{hist.edges[k]!r},{hist.edges[k + 1]!r},{hist.counts[k]}\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotdet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score predictions against annotations")
    p.add_argument("--gt", required=True, help="annotation file")
    p.add_argument("--pred", required=True, help="prediction file")
    p.add_argument("--conf", type=float, default=0.3, help="confidence threshold for P/R/F")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold for matching")
    p.add_argument("--pooled", action="store_true", help="pool frames instead of per-video averaging")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--out", help="also write the report to this file")
    p.add_argument("--pr-csv", help="write PR curve points as CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("iou", help="rotated IoU of two boxes")
    p.add_argument("--box-a", required=True, help="cx,cy,w,h,angle")
    p.add_argument("--box-b", required=True, help="cx,cy,w,h,angle")
    p.add_argument("--radians", action="store_true", help="angles are radians (default degrees)")
    p.set_defaults(func=_cmd_iou)

    p = sub.add_parser("nms", help="filter a prediction file with rotated NMS")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--conf", type=float, default=0.3)
    p.add_argument("--iou-nms", type=float, default=0.45)
    p.set_defaults(func=_cmd_nms)

    p = sub.add_parser("synth", help="generate a synthetic annotated scene")
    p.add_argument("--out", required=True, help="annotation file to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--people", default="2,6", help="min,max people per frame")
    p.add_argument("--size", type=int, default=256, help="image size in pixels")
    p.add_argument("--pose-noise", type=float, default=0.15)
    p.add_argument("--corrupt", action="store_true", help="also emit noisy detections")
    p.add_argument("--pred-out", help="prediction file for --corrupt output")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit-demo", help="gradient-descent fit of one box")
    p.add_argument("--loss", default="periodic-l1",
                   choices=[k.value for k in AngleLossKind])
    p.add_argument("--alpha", type=float, default=2 * math.pi)
    p.add_argument("--beta", type=float, default=math.pi)
    p.add_argument("--unbounded", action="store_true", help="predict the angle directly")
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--steps", type=int, default=700)
    p.add_argument("--delta-theta", type=float, default=None,
                   help="initial angle offset in radians (default: seeded random)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="trajectory CSV path")
    p.set_defaults(func=_cmd_fit_demo)

    p = sub.add_parser("ablation", help="angle-loss ablation on synthetic data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--steps", type=int, default=700)
    p.add_argument("--steps-l2", type=int, default=None)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ablation)

    p = sub.add_parser("hist", help="aspect-ratio histogram of predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=_cmd_hist)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (AnnotationFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (InvalidBoxError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
