"""Command-line wrapper: `extract --images DIR --layer K --out FILE`.

Exit codes: 0 success, 1 usage error, 2 data or inference error.
"""

from __future__ import annotations

import argparse
import sys

from extractor.activations import LAYER_COUNT, ExtractionSpec, extract_layer_activations


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="extract", description=__doc__.splitlines()[0])
    parser.add_argument("--images", required=True,
                        help="image directory; lexicographic filename order = frame order")
    parser.add_argument("--layer", type=int, required=True,
                        help=f"backbone module index in [1, {LAYER_COUNT}]")
    parser.add_argument("--out", required=True, help="output feature file")
    parser.add_argument("--weights", default="pretrained",
                        help="'pretrained', 'random', or a state-dict path (default pretrained)")
    parser.add_argument("--seed", type=int, default=0,
                        help="initialization seed for --weights random (default 0)")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--quantize-u16", action="store_true",
                        help="store activations as min-max-scaled uint16 instead of float32")
    parser.add_argument("--skip-unreadable", action="store_true",
                        help="warn and continue on unreadable images instead of aborting")
    parser.add_argument("--no-stretch", action="store_true",
                        help="skip the min-max contrast stretch during preprocessing")
    return parser


def app(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        spec = ExtractionSpec(
            images_dir=args.images,
            layer=args.layer,
            out_path=args.out,
            weights=args.weights,
            seed=args.seed,
            quantize_u16=args.quantize_u16,
            batch_size=args.batch_size,
            skip_unreadable=args.skip_unreadable,
            stretch=not args.no_stretch,
        )
        count, dim = extract_layer_activations(spec)
        print(f"wrote {count} frames of dim {dim} (layer {args.layer}) to {args.out}")
        return 0
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, LookupError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(app())
