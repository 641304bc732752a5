#!/usr/bin/env python3
"""Rank feature files by best F1 over a matched pair of traverses.

Point it at a directory of extracted features named <label>_train.feat /
<label>_test.feat (any shared prefix works: layer06_train.feat, ...)
plus a frame ground-truth CSV, and it evaluates every pair with the
standard filter settings and prints a ranking. This is how competing
descriptor layers (or any competing embeddings) get compared on equal
footing.

With --demo it fabricates proxy "layers" as synthetic datasets of
increasing noise, which exercises the ranking end to end on a machine
with no extracted features around.

Example:
    python3 scripts/layer_f1_comparison.py --features /data/layers --gt /data/gt.csv
    python3 scripts/layer_f1_comparison.py --demo
"""

import argparse
import math
import os
import sys

from vpr.evaluation import load_ground_truth_csv
from vpr.features import load_feature_set
from vpr.filters import FilterParams
from vpr.harness import SynthConfig, generate_synthetic, run_pipeline

PHIS = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5]


def discover_pairs(directory):
    pairs = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith("_train.feat"):
            continue
        label = name[: -len("_train.feat")]
        test_name = label + "_test.feat"
        if os.path.exists(os.path.join(directory, test_name)):
            pairs.append((label, os.path.join(directory, name),
                          os.path.join(directory, test_name)))
    return pairs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--features", help="directory of <label>_{train,test}.feat pairs")
    ap.add_argument("--gt", help="frame ground-truth CSV for the real pairs")
    ap.add_argument("--tolerance", type=float, default=1.0)
    ap.add_argument("--sigma", type=float, default=math.pi / 4)
    ap.add_argument("--demo", action="store_true",
                    help="rank synthetic proxy layers instead of real files")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rows = []
    if args.demo:
        # proxy layers: same road, progressively noisier features
        for k, sigma in enumerate((0.1, 0.4, 0.7, 1.0, 1.4)):
            cfg = SynthConfig(train_frames=150, dim=24, noise_sigma=sigma,
                              basis_count=6, seed=args.seed)
            train, test, gt = generate_synthetic(cfg)
            report = run_pipeline(train, test, FilterParams(sigma=args.sigma), gt, PHIS)
            rows.append((f"proxy{k:02d}(noise={sigma})", report))
    else:
        if not args.features or not args.gt:
            ap.error("--features and --gt are required without --demo")
        pairs = discover_pairs(args.features)
        if not pairs:
            print(f"no <label>_train.feat / <label>_test.feat pairs in {args.features}",
                  file=sys.stderr)
            return 2
        gt = load_ground_truth_csv(args.gt, tolerance=args.tolerance)
        for label, train_path, test_path in pairs:
            train = load_feature_set(train_path)
            test = load_feature_set(test_path)
            report = run_pipeline(train, test, FilterParams(sigma=args.sigma), gt, PHIS)
            rows.append((label, report))

    rows.sort(key=lambda item: item[1].best_f1, reverse=True)
    print(f"{'rank':>4} {'label':<24} {'best_f1':>8} {'recall@p=1':>11}")
    for rank, (label, report) in enumerate(rows, start=1):
        print(f"{rank:>4} {label:<24} {report.best_f1:>8.3f} "
              f"{report.max_recall_at_full_precision:>11.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
