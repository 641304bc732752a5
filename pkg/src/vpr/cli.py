"""Command-line surface for the place-recognition pipeline.

Stages hand off through files so an expensive confusion matrix is built
once and filtered, swept, or rendered many times: `describe` or an
external extractor emits feature files, `match` emits the matrix,
`filter` emits final-match CSV, `eval`/`sweep` emit report JSON.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np
from PIL import Image

from vpr import evaluation, features, filters, harness, matching

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif", ".tiff"}

DEFAULT_PHIS = "0.01,0.02,0.05,0.1,0.2,0.5"


class UsageError(Exception):
    """Bad flags or flag combinations; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; 2 is reserved for data errors here
    def error(self, message):
        raise UsageError(message)


def _load_image(path) -> np.ndarray:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    with Image.open(path) as img:
        if img.mode in ("L", "RGB"):
            return np.asarray(img, dtype=np.uint8)
        if img.mode in ("1", "I", "I;16", "F", "LA"):
            return np.asarray(img.convert("L"), dtype=np.uint8)
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _save_gray(img: np.ndarray, path) -> None:
    if str(path).lower().endswith(".pgm"):
        h, w = img.shape
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())
    else:
        Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), mode="L").save(path)


def _load_features(path) -> features.FeatureSet:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such feature file: {path}")
    if str(path).lower().endswith(".csv"):
        return features.load_feature_set_csv(path)
    return features.load_feature_set(path)


def _list_images(directory) -> list:
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"no such image directory: {directory}")
    names = sorted(
        n for n in os.listdir(directory)
        if os.path.splitext(n)[1].lower() in IMAGE_EXTENSIONS
    )
    if not names:
        raise features.FormatError(f"{directory}: no image files found")
    return [os.path.join(directory, n) for n in names]


def _filter_params(args) -> filters.FilterParams:
    # sweep has no single --phi; the base value is overridden per curve point
    return filters.FilterParams(
        epsilon=args.epsilon, window=args.window, sigma=args.sigma,
        phi=getattr(args, "phi", 0.1),
    )


def _ground_truth(args) -> evaluation.GroundTruth:
    geo_given = args.train_geo is not None or args.test_geo is not None
    if geo_given:
        if args.train_geo is None or args.test_geo is None:
            raise UsageError("geo ground truth needs both --train-geo and --test-geo")
        if args.gt is not None:
            raise UsageError("pass either --gt or the geo flags, not both")
        for p in (args.train_geo, args.test_geo):
            if not os.path.exists(p):
                raise FileNotFoundError(f"no such geotag file: {p}")
        return evaluation.GroundTruth.geotagged(
            evaluation.load_geotags_csv(args.train_geo),
            evaluation.load_geotags_csv(args.test_geo),
            tolerance_m=args.tolerance_m,
        )
    if args.gt is None:
        raise UsageError("ground truth required: --gt CSV or --train-geo/--test-geo")
    if not os.path.exists(args.gt):
        raise FileNotFoundError(f"no such ground-truth file: {args.gt}")
    return evaluation.load_ground_truth_csv(args.gt, tolerance=args.tolerance)


def _add_gt_flags(sub) -> None:
    sub.add_argument("--gt", help="frame-correspondence ground-truth CSV")
    sub.add_argument("--tolerance", type=float, default=1.0,
                     help="frame tolerance for --gt (default 1)")
    sub.add_argument("--train-geo", help="training traverse geotag CSV")
    sub.add_argument("--test-geo", help="testing traverse geotag CSV")
    sub.add_argument("--tolerance-m", type=float, default=40.0,
                     help="meter tolerance for geo ground truth (default 40)")


def _add_filter_flags(sub) -> None:
    sub.add_argument("--epsilon", type=int, default=3,
                     help="max jump between consecutive matched indices (default 3)")
    sub.add_argument("--window", type=int, default=5,
                     help="filter window length in index steps (default 5)")
    sub.add_argument("--sigma", type=float, default=math.pi / 4,
                     help="expected match-line slope angle in radians (default pi/4)")


def _write_json(payload: dict, out) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _cmd_preprocess(args) -> int:
    img = _load_image(args.input)
    _save_gray(features.preprocess_image(img), args.out)
    return 0


def _cmd_describe(args) -> int:
    paths = _list_images(args.images)
    rows = []
    for p in paths:
        pre = features.preprocess_image(_load_image(p))
        rows.append(features.pixel_descriptor(pre, args.side))
    fs = features.FeatureSet(frames=np.stack(rows), layer_tag=0, dtype="float32")
    if str(args.out).lower().endswith(".csv"):
        features.save_feature_set_csv(fs, args.out)
    else:
        features.save_feature_set(fs, args.out)
    print(f"wrote {fs.count} frames of dim {fs.dim} to {args.out}")
    return 0


def _cmd_match(args) -> int:
    train = _load_features(args.train)
    test = _load_features(args.test)
    cm = matching.build_confusion_matrix(
        train, test, metric=args.metric, sad_offset=args.max_offset, threads=args.threads
    )
    matching.save_confusion_matrix(cm, args.out)
    print(f"wrote {cm.train_count}x{cm.test_count} confusion matrix to {args.out}")
    return 0


def _cmd_filter(args) -> int:
    if not os.path.exists(args.conf):
        raise FileNotFoundError(f"no such confusion matrix file: {args.conf}")
    cm = matching.load_confusion_matrix(args.conf)
    params = _filter_params(args)
    hyps = matching.best_matches(cm)
    flagged = filters.spatial_continuity(hyps, params.epsilon, params.window)
    final = filters.sequential_filter(flagged, params, cm.train_count)
    filters.write_final_matches(final, args.out)
    accepted = sum(1 for m in final if m.accepted)
    print(f"accepted {accepted} of {len(final)} frames; wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    if not os.path.exists(args.matches):
        raise FileNotFoundError(f"no such final-matches file: {args.matches}")
    final = filters.read_final_matches(args.matches)
    gt = _ground_truth(args)
    point = evaluation.precision_recall(final, gt, phi=args.phi)
    report = evaluation.EvalReport(
        params=_filter_params(args),
        curve=(point,),
        max_recall_at_full_precision=point.recall if point.precision == 1.0 else 0.0,
        best_f1=evaluation.f1_score(point.precision, point.recall),
    )
    _write_json(evaluation.eval_report_to_dict(report), args.out)
    return 0


def _cmd_sweep(args) -> int:
    if not os.path.exists(args.conf):
        raise FileNotFoundError(f"no such confusion matrix file: {args.conf}")
    try:
        phis = [float(p) for p in args.phis.split(",") if p.strip() != ""]
    except ValueError:
        raise UsageError(f"bad --phis list: {args.phis!r}")
    cm = matching.load_confusion_matrix(args.conf)
    gt = _ground_truth(args)
    params = _filter_params(args)
    hyps = filters.spatial_continuity(matching.best_matches(cm), params.epsilon, params.window)
    report = evaluation.sweep_phi(hyps, params, gt, phis, cm.train_count)
    _write_json(evaluation.eval_report_to_dict(report), args.out)
    return 0


def _cmd_render(args) -> int:
    if not os.path.exists(args.conf):
        raise FileNotFoundError(f"no such confusion matrix file: {args.conf}")
    cm = matching.load_confusion_matrix(args.conf)
    evaluation.render_confusion_matrix(cm, args.out)
    print(f"rendered {cm.train_count}x{cm.test_count} matrix to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    cfg = harness.SynthConfig(
        train_frames=args.frames,
        velocity_ratio=args.ratio,
        dim=args.dim,
        noise_sigma=args.noise,
        basis_count=args.basis,
        seed=args.seed,
    )
    train, test, gt = harness.generate_synthetic(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    features.save_feature_set(train, os.path.join(args.out_dir, "train.feat"))
    features.save_feature_set(test, os.path.join(args.out_dir, "test.feat"))
    evaluation.write_ground_truth_csv(gt.mapping, os.path.join(args.out_dir, "gt.csv"))
    print(f"wrote train.feat ({train.count} frames), test.feat ({test.count} frames), gt.csv to {args.out_dir}")
    return 0


def _cmd_bench(args) -> int:
    report = harness.bench_matching(
        dim=args.dim,
        ref_count=args.refs,
        repetitions=args.reps,
        threads=args.threads,
        seed=args.seed,
    )
    _write_json(harness.bench_report_to_dict(report), args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="vpr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("preprocess",
                       help="grayscale, resize to 256x256, stretch contrast")
    p.add_argument("--in", dest="input", required=True, help="input image")
    p.add_argument("--out", required=True, help="output image (.pgm or any Pillow format)")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("describe",
                       help="pixel descriptors for a directory of images")
    p.add_argument("--images", required=True, help="image directory (lexicographic order)")
    p.add_argument("--side", type=int, default=32,
                   help="block-average grid side per frame (default 32)")
    p.add_argument("--out", required=True, help="output feature file")
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("match",
                       help="build the train-vs-test confusion matrix")
    p.add_argument("--train", required=True, help="training feature file (.csv autodetected)")
    p.add_argument("--test", required=True, help="testing feature file (.csv autodetected)")
    p.add_argument("--metric", choices=("l2", "sad"), default="l2")
    p.add_argument("--max-offset", type=int, default=0,
                   help="horizontal shift tolerance for sad (default 0)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output confusion matrix file")
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("filter",
                       help="continuity check plus slope filter over a matrix")
    p.add_argument("--conf", required=True, help="confusion matrix file")
    _add_filter_flags(p)
    p.add_argument("--phi", type=float, default=0.1,
                   help="accepted slope-angle deviation in radians (default 0.1)")
    p.add_argument("--out", required=True, help="output final-matches CSV")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("eval",
                       help="precision/recall of a final-matches CSV")
    p.add_argument("--matches", required=True, help="final-matches CSV")
    _add_gt_flags(p)
    _add_filter_flags(p)
    p.add_argument("--phi", type=float, default=0.1,
                   help="phi echoed into the report (default 0.1)")
    p.add_argument("--out", help="output JSON (default stdout)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep",
                       help="PR curve over a list of slope tolerances")
    p.add_argument("--conf", required=True, help="confusion matrix file")
    _add_gt_flags(p)
    _add_filter_flags(p)
    p.add_argument("--phis", default=DEFAULT_PHIS,
                   help=f"comma-separated ascending phi list (default {DEFAULT_PHIS})")
    p.add_argument("--out", help="output JSON (default stdout)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("render",
                       help="confusion matrix as a PGM image, bright = close")
    p.add_argument("--conf", required=True, help="confusion matrix file")
    p.add_argument("--out", required=True, help="output PGM path")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("synth",
                       help="seeded synthetic traverse pair with ground truth")
    p.add_argument("--frames", type=int, required=True, help="training frame count")
    p.add_argument("--ratio", type=float, default=1.0,
                   help="train/test velocity ratio (default 1.0)")
    p.add_argument("--noise", type=float, default=0.0, help="feature noise sigma")
    p.add_argument("--dim", type=int, default=32, help="feature dimension (default 32)")
    p.add_argument("--basis", type=int, default=8,
                   help="sinusoids per dimension (default 8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True,
                   help="directory for train.feat, test.feat, gt.csv")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("bench",
                       help="matching throughput benchmark")
    p.add_argument("--dim", type=int, default=64899, help="query dimension (default 64899)")
    p.add_argument("--refs", type=int, default=4789,
                   help="reference frame count (default 4789)")
    p.add_argument("--reps", type=int, default=3, help="timed queries (default 3)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output JSON (default stdout)")
    p.set_defaults(func=_cmd_bench)

    return parser


def app(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help()
            return 1
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, LookupError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(app())
