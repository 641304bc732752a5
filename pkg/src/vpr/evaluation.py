"""Ground truth, precision/recall scoring, slope-tolerance sweeps, rendering.

Ground truth comes in two kinds. Frame correspondence maps every testing
frame to its true training frame and judges a match by index distance.
Geotagged ground truth stores per-frame latitude/longitude for both
traverses and judges by great-circle distance between the predicted
training frame and the testing frame.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from vpr.features import FormatError
from vpr.filters import FilterParams, FinalMatch, sequential_filter
from vpr.matching import ConfusionMatrix, MatchHypothesis

EARTH_RADIUS_M = 6371000.0

FRAME_KIND = "frame_correspondence"
GEO_KIND = "geotagged"


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters between two lat/lon pairs (degrees)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2) - math.radians(lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


@dataclass(frozen=True)
class GroundTruth:
    """True correspondences for a test traverse, by frame index or geotag.

    For the frame kind, `mapping` gives the true training index of every
    testing frame and `tolerance` is in frames (inclusive). For the geo
    kind, `train_coords` / `test_coords` are (N, 2) arrays of lat/lon in
    degrees and `tolerance` is in meters.
    """

    kind: str
    tolerance: float
    mapping: dict | None = None
    train_coords: np.ndarray | None = None
    test_coords: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (FRAME_KIND, GEO_KIND):
            raise ValueError(f"unknown ground-truth kind {self.kind!r}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.kind == FRAME_KIND:
            if not self.mapping:
                raise ValueError("frame ground truth needs a non-empty index mapping")
        else:
            for name in ("train_coords", "test_coords"):
                arr = getattr(self, name)
                if arr is None:
                    raise ValueError(f"geo ground truth needs {name}")
                arr = np.ascontiguousarray(arr, dtype=np.float64)
                if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
                    raise ValueError(f"{name} must be a non-empty (N, 2) lat/lon array")
                object.__setattr__(self, name, arr)

    @staticmethod
    def frame_based(mapping: dict, tolerance: float = 1.0) -> "GroundTruth":
        return GroundTruth(kind=FRAME_KIND, tolerance=tolerance, mapping=dict(mapping))

    @staticmethod
    def geotagged(train_coords, test_coords, tolerance_m: float = 40.0) -> "GroundTruth":
        return GroundTruth(
            kind=GEO_KIND,
            tolerance=tolerance_m,
            train_coords=np.asarray(train_coords, dtype=np.float64),
            test_coords=np.asarray(test_coords, dtype=np.float64),
        )


TRUE_POSITIVE = "true_positive"
FALSE_POSITIVE = "false_positive"
NOT_REPORTED = "not_reported"


def judge_match(fm: FinalMatch, gt: GroundTruth) -> str:
    """Classify one filtered match against ground truth.

    Unaccepted frames are not_reported. Accepted frames are true_positive
    when the prediction lies within tolerance (inclusive), else
    false_positive. A test frame missing from the ground truth raises.
    """
    if gt.kind == FRAME_KIND:
        try:
            true_index = gt.mapping[fm.test_index]
        except KeyError:
            raise LookupError(f"no ground truth for test frame {fm.test_index}") from None
        if not fm.accepted:
            return NOT_REPORTED
        return TRUE_POSITIVE if abs(fm.predicted_train_index - true_index) <= gt.tolerance else FALSE_POSITIVE
    if fm.test_index >= gt.test_coords.shape[0] or fm.test_index < 0:
        raise LookupError(f"no geotag for test frame {fm.test_index}")
    if not fm.accepted:
        return NOT_REPORTED
    if fm.predicted_train_index >= gt.train_coords.shape[0] or fm.predicted_train_index < 0:
        raise LookupError(f"no geotag for training frame {fm.predicted_train_index}")
    t_lat, t_lon = gt.test_coords[fm.test_index]
    r_lat, r_lon = gt.train_coords[fm.predicted_train_index]
    dist = haversine_m(r_lat, r_lon, t_lat, t_lon)
    return TRUE_POSITIVE if dist <= gt.tolerance else FALSE_POSITIVE


@dataclass(frozen=True)
class PRPoint:
    """Precision/recall at one slope-tolerance setting."""

    phi: float
    precision: float
    recall: float
    tp: int
    fp: int
    reported: int
    total: int


def precision_recall(final: list[FinalMatch], gt: GroundTruth, phi: float = math.nan) -> PRPoint:
    """Score a filtered match list; empty report counts as precision 1.0."""
    tp = fp = 0
    for fm in final:
        verdict = judge_match(fm, gt)
        if verdict == TRUE_POSITIVE:
            tp += 1
        elif verdict == FALSE_POSITIVE:
            fp += 1
    reported = tp + fp
    total = len(final)
    precision = tp / reported if reported > 0 else 1.0
    recall = tp / total if total > 0 else 0.0
    return PRPoint(
        phi=phi, precision=precision, recall=recall, tp=tp, fp=fp, reported=reported, total=total
    )


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if not 0.0 <= precision <= 1.0 or not 0.0 <= recall <= 1.0:
        raise ValueError(f"precision/recall must lie in [0, 1], got {precision}, {recall}")
    s = precision + recall
    return 0.0 if s == 0.0 else 2.0 * precision * recall / s


@dataclass(frozen=True)
class EvalReport:
    """PR curve over a slope-tolerance sweep plus its two summary scores."""

    params: FilterParams
    curve: tuple[PRPoint, ...]
    max_recall_at_full_precision: float
    best_f1: float


def sweep_phi(
    hyps: list[MatchHypothesis],
    params: FilterParams,
    gt: GroundTruth,
    phi_values,
    train_count: int,
) -> EvalReport:
    """Evaluate the sequential filter at each slope tolerance.

    Spatial plausibility flags on `hyps` are held fixed; only the slope
    gate is re-run per phi. `phi_values` must be non-empty and ascending.
    """
    phis = [float(p) for p in phi_values]
    if not phis:
        raise ValueError("phi_values must be non-empty")
    if any(b < a for a, b in zip(phis, phis[1:])):
        raise ValueError("phi_values must be ascending")
    curve = []
    for phi in phis:
        final = sequential_filter(hyps, dataclasses.replace(params, phi=phi), train_count)
        curve.append(precision_recall(final, gt, phi=phi))
    full = [p.recall for p in curve if p.precision == 1.0]
    return EvalReport(
        params=params,
        curve=tuple(curve),
        max_recall_at_full_precision=max(full) if full else 0.0,
        best_f1=max(f1_score(p.precision, p.recall) for p in curve),
    )


def _round9(v: float) -> float:
    return float(format(v, ".9g"))


def eval_report_to_dict(report: EvalReport) -> dict:
    """JSON-ready dict with fixed key order and 9-significant-digit floats."""
    return {
        "params": {
            "epsilon": report.params.epsilon,
            "window": report.params.window,
            "sigma": _round9(report.params.sigma),
        },
        "curve": [
            {
                "phi": _round9(p.phi),
                "precision": _round9(p.precision),
                "recall": _round9(p.recall),
                "tp": p.tp,
                "fp": p.fp,
                "reported": p.reported,
                "total": p.total,
            }
            for p in report.curve
        ],
        "max_recall_at_full_precision": _round9(report.max_recall_at_full_precision),
        "best_f1": _round9(report.best_f1),
    }


def write_eval_report(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(eval_report_to_dict(report), fh, indent=2)
        fh.write("\n")


def render_confusion_matrix(cm: ConfusionMatrix, path) -> None:
    """Render the matrix as a binary PGM, one pixel per entry.

    Intensity is 255 * (1 - (d - min) / (max - min)) rounded to nearest,
    so the best (lowest-distance) entries are bright; a constant matrix
    renders all black.
    """
    d = cm.distances.astype(np.float64)
    lo = float(d.min())
    hi = float(d.max())
    if hi == lo:
        pixels = np.zeros(d.shape, dtype=np.uint8)
    else:
        pixels = np.rint(255.0 * (1.0 - (d - lo) / (hi - lo))).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (cm.test_count, cm.train_count))
        fh.write(pixels.tobytes())


_GT_HEADER = ["test_index", "train_index"]
_GEO_HEADER = ["frame_index", "lat_deg", "lon_deg"]


def write_ground_truth_csv(mapping: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_GT_HEADER)
        for j in sorted(mapping):
            writer.writerow([j, mapping[j]])


def load_ground_truth_csv(path, tolerance: float = 1.0) -> GroundTruth:
    """Frame-correspondence ground truth from a test_index,train_index CSV."""
    mapping = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header != _GT_HEADER:
            raise FormatError(f"{path}: unexpected header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                j, i = int(row[0]), int(row[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if j in mapping:
                raise FormatError(f"{path}:{lineno}: duplicate test index {j}")
            mapping[j] = i
    if not mapping:
        raise FormatError(f"{path}: no ground-truth rows")
    return GroundTruth.frame_based(mapping, tolerance=tolerance)


def write_geotags_csv(coords, path) -> None:
    coords = np.asarray(coords, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_GEO_HEADER)
        for i in range(coords.shape[0]):
            writer.writerow([i, "%.9g" % coords[i, 0], "%.9g" % coords[i, 1]])


def load_geotags_csv(path) -> np.ndarray:
    """Per-frame lat/lon degrees; frame indices must be 0..N-1 in order."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header != _GEO_HEADER:
            raise FormatError(f"{path}: unexpected header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                idx, lat, lon = int(row[0]), float(row[1]), float(row[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if idx != len(rows):
                raise FormatError(f"{path}:{lineno}: frame index {idx}, expected {len(rows)}")
            rows.append((lat, lon))
    if not rows:
        raise FormatError(f"{path}: no geotag rows")
    return np.array(rows, dtype=np.float64)
