"""Synthetic traverses, a brute-force oracle pipeline, and the throughput bench.

The synthetic world is a 1-D road: each feature dimension is a smooth
random superposition of sinusoids over position, so nearby positions get
nearby descriptors and far-apart positions decorrelate. The training
traverse samples positions 0..R-1; the testing traverse drives the same
road at `velocity_ratio` times the speed with optional per-component
Gaussian noise, which gives exact ground truth by construction.

The oracle pipeline recomputes everything with plain Python loops and the
literal definitions (first-min scans, quantified continuity predicate,
normal-equation line fits) so the fast path can be checked against it
field by field.
"""

from __future__ import annotations

import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from vpr.evaluation import EvalReport, GroundTruth, PRPoint, sweep_phi
from vpr.features import FeatureSet
from vpr.filters import FilterParams, _round_half_away, spatial_continuity
from vpr.matching import best_matches, build_confusion_matrix, distances_to_rows

# comparison baseline: one 64899-dim query against 4789 references at
# about 2.5 queries/s, i.e. ~6.22e8 pairwise values scanned per second
BASELINE_VALUES_PER_SECOND = 6.22e8

FREQ_LOW = 0.05
FREQ_HIGH = 0.7


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for one synthetic two-traverse dataset.

    velocity_ratio is training speed over testing speed in frames: the
    testing traverse has round(train_frames / velocity_ratio) frames and
    test frame j sits at road position velocity_ratio * j.
    """

    train_frames: int
    velocity_ratio: float = 1.0
    dim: int = 32
    noise_sigma: float = 0.0
    basis_count: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.train_frames < 1:
            raise ValueError(f"train_frames must be >= 1, got {self.train_frames}")
        if not (math.isfinite(self.velocity_ratio) and self.velocity_ratio > 0):
            raise ValueError(f"velocity_ratio must be positive, got {self.velocity_ratio}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.basis_count < 1:
            raise ValueError(f"basis_count must be >= 1, got {self.basis_count}")
        if self.test_frames < 1:
            raise ValueError("config yields an empty testing traverse")

    @property
    def test_frames(self) -> int:
        return _round_half_away(self.train_frames / self.velocity_ratio)


def generate_synthetic(cfg: SynthConfig):
    """Build (train, test, ground truth) for one seeded configuration.

    Per dimension the signature is (1/sqrt(B)) * sum of B sinusoids with
    frequencies drawn from U(0.05, 0.7) rad/frame and uniform random
    phases. Ground truth maps test frame j to round(velocity_ratio * j)
    clamped into the training range, with a 1-frame tolerance.
    """
    rng = np.random.default_rng(cfg.seed)
    freqs = rng.uniform(FREQ_LOW, FREQ_HIGH, size=(cfg.dim, cfg.basis_count))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(cfg.dim, cfg.basis_count))
    amp = 1.0 / math.sqrt(cfg.basis_count)

    def signature(positions: np.ndarray) -> np.ndarray:
        # (P, D): broadcast positions against every dimension's bank
        angles = positions[:, None, None] * freqs[None, :, :] + phases[None, :, :]
        return amp * np.sin(angles).sum(axis=2)

    train_pos = np.arange(cfg.train_frames, dtype=np.float64)
    test_pos = cfg.velocity_ratio * np.arange(cfg.test_frames, dtype=np.float64)
    train_vals = signature(train_pos)
    test_vals = signature(test_pos)
    if cfg.noise_sigma > 0:
        test_vals = test_vals + cfg.noise_sigma * rng.standard_normal(test_vals.shape)
    train = FeatureSet(frames=train_vals.astype(np.float32), layer_tag=0, dtype="float32")
    test = FeatureSet(frames=test_vals.astype(np.float32), layer_tag=0, dtype="float32")
    mapping = {
        j: min(max(_round_half_away(cfg.velocity_ratio * j), 0), cfg.train_frames - 1)
        for j in range(cfg.test_frames)
    }
    return train, test, GroundTruth.frame_based(mapping, tolerance=1.0)


def run_pipeline(
    train: FeatureSet,
    test: FeatureSet,
    params: FilterParams,
    gt: GroundTruth,
    phi_values,
    threads: int = 1,
) -> EvalReport:
    """Fast path end to end: confusion matrix, argmin, both filters, sweep."""
    cm = build_confusion_matrix(train, test, threads=threads)
    hyps = best_matches(cm)
    flagged = spatial_continuity(hyps, params.epsilon, params.window)
    return sweep_phi(flagged, params, gt, phi_values, train.count)


def _f32(x: float) -> float:
    return struct.unpack("<f", struct.pack("<f", x))[0]


def oracle_pipeline(
    train: FeatureSet,
    test: FeatureSet,
    params: FilterParams,
    gt: GroundTruth,
    phi_values,
) -> EvalReport:
    """Slow reference pipeline: plain loops, literal definitions.

    Intended for small instances only (hundreds of frames); shares nothing
    with the fast path except the input/output types.
    """
    r, t = train.count, test.count
    a = train.frames
    b = test.frames

    # distance matrix, stored with the same float32 quantization as the
    # fast path's matrix entries
    matrix = []
    for i in range(r):
        row = []
        for j in range(t):
            s = 0.0
            for k in range(train.dim):
                e = float(a[i, k]) - float(b[j, k])
                s += e * e
            row.append(_f32(math.sqrt(s)))
        matrix.append(row)

    # first-minimum scan per column
    argmins = []
    for j in range(t):
        best_i = 0
        best_v = matrix[0][j]
        for i in range(1, r):
            if matrix[i][j] < best_v:
                best_i = i
                best_v = matrix[i][j]
        argmins.append(best_i)

    # quantified continuity predicate over the trailing window
    plausible = []
    for j in range(t):
        if j < params.window:
            plausible.append(False)
            continue
        ok = True
        for u in range(j - params.window + 1, j + 1):
            if abs(argmins[u - 1] - argmins[u]) > params.epsilon:
                ok = False
        plausible.append(ok)

    # per-frame line fit by the normal equations
    fits = {}
    for j in range(params.window, t):
        xs = list(range(j - params.window, j + 1))
        ys = [argmins[x] for x in xs]
        n = len(xs)
        sx = sy = sxx = sxy = 0.0
        for x, y in zip(xs, ys):
            sx += x
            sy += y
            sxx += x * x
            sxy += x * y
        alpha = (n * sxy - sx * sy) / (n * sxx - sx * sx)
        beta = (sy - alpha * sx) / n
        fits[j] = (alpha, beta)

    def round_half_away(v):
        return int(math.floor(v + 0.5)) if v >= 0 else int(math.ceil(v - 0.5))

    def judge(j, predicted):
        if gt.kind == "frame_correspondence":
            if j not in gt.mapping:
                raise LookupError(f"no ground truth for test frame {j}")
            return abs(predicted - gt.mapping[j]) <= gt.tolerance
        lat1, lon1 = gt.train_coords[predicted]
        lat2, lon2 = gt.test_coords[j]
        p1, p2 = math.radians(lat1), math.radians(lat2)
        h = (
            math.sin((p2 - p1) / 2.0) ** 2
            + math.cos(p1) * math.cos(p2) * math.sin((math.radians(lon2) - math.radians(lon1)) / 2.0) ** 2
        )
        return 2.0 * 6371000.0 * math.asin(min(1.0, math.sqrt(h))) <= gt.tolerance

    curve = []
    for phi in phi_values:
        tp = fp = 0
        for j in range(t):
            if j < params.window or not plausible[j]:
                continue
            alpha, beta = fits[j]
            if abs(math.atan(alpha) - params.sigma) > phi:
                continue
            predicted = min(max(round_half_away(alpha * j + beta), 0), r - 1)
            if judge(j, predicted):
                tp += 1
            else:
                fp += 1
        reported = tp + fp
        precision = tp / reported if reported > 0 else 1.0
        recall = tp / t if t > 0 else 0.0
        curve.append(
            PRPoint(
                phi=float(phi),
                precision=precision,
                recall=recall,
                tp=tp,
                fp=fp,
                reported=reported,
                total=t,
            )
        )
    full = [p.recall for p in curve if p.precision == 1.0]
    best_f1 = 0.0
    for p in curve:
        s = p.precision + p.recall
        f1 = 0.0 if s == 0.0 else 2.0 * p.precision * p.recall / s
        if f1 > best_f1:
            best_f1 = f1
    return EvalReport(
        params=params,
        curve=tuple(curve),
        max_recall_at_full_precision=max(full) if full else 0.0,
        best_f1=best_f1,
    )


@dataclass(frozen=True)
class BenchReport:
    """Matching throughput measurement for one configuration."""

    dim: int
    ref_count: int
    queries_per_second: float
    values_per_second: float
    wall_time: float
    threads: int = 1

    def __post_init__(self):
        for name in ("dim", "ref_count", "queries_per_second", "values_per_second", "wall_time", "threads"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def bench_matching(
    dim: int,
    ref_count: int,
    repetitions: int,
    threads: int = 1,
    seed: int = 0,
) -> BenchReport:
    """Time Euclidean matching of random queries against random references.

    References are drawn first, then `repetitions` fresh queries, all from
    a seeded generator, converted to float32 outside the timed region.
    The distances come from the same kernel the matching module uses, so
    benchmark numbers describe real pipeline behaviour.
    """
    if dim < 1 or ref_count < 1:
        raise ValueError(f"dim and ref_count must be >= 1, got {dim}, {ref_count}")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    rng = np.random.default_rng(seed)
    refs = np.ascontiguousarray(rng.standard_normal((ref_count, dim)), dtype=np.float32)
    queries = np.ascontiguousarray(rng.standard_normal((repetitions, dim)), dtype=np.float32)

    bounds = np.linspace(0, ref_count, min(threads, ref_count) + 1).astype(int)
    chunks = [(bounds[w], bounds[w + 1]) for w in range(len(bounds) - 1)]

    def one_query(q, pool):
        if pool is None:
            distances_to_rows(refs, q)
            return
        out = np.empty(ref_count)
        jobs = [pool.submit(lambda lo, hi: distances_to_rows(refs[lo:hi], q), lo, hi) for lo, hi in chunks]
        for (lo, hi), job in zip(chunks, jobs):
            out[lo:hi] = job.result()

    # warm the kernel and the page cache before timing
    distances_to_rows(refs, queries[0])

    if threads == 1:
        start = time.perf_counter()
        for rep in range(repetitions):
            one_query(queries[rep], None)
        wall = time.perf_counter() - start
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            start = time.perf_counter()
            for rep in range(repetitions):
                one_query(queries[rep], pool)
            wall = time.perf_counter() - start
    wall = max(wall, 1e-9)
    qps = repetitions / wall
    return BenchReport(
        dim=dim,
        ref_count=ref_count,
        queries_per_second=qps,
        values_per_second=dim * ref_count * qps,
        wall_time=wall,
        threads=threads,
    )


def bench_report_to_dict(report: BenchReport) -> dict:
    """JSON-ready dict; throughput floats keep 9 significant digits."""
    f9 = lambda v: float(format(v, ".9g"))
    return {
        "dim": report.dim,
        "ref_count": report.ref_count,
        "queries_per_second": f9(report.queries_per_second),
        "values_per_second": f9(report.values_per_second),
        "wall_time": f9(report.wall_time),
        "threads": report.threads,
        "baseline_values_per_second": f9(BASELINE_VALUES_PER_SECOND),
    }
