"""Distance kernels, confusion-matrix construction, and best-match extraction.

All Euclidean distances in the package flow through one compiled kernel
(float32 inputs cast elementwise to float64, squared differences
accumulated in float64), so single-pair calls, whole-matrix builds, and
the throughput benchmark produce bit-identical values on the same data.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from vpr.features import FeatureSet, FormatError, block_average_grid

CONFMAT_MAGIC = b"CONFMAT1"


@numba.njit("void(float32[:, ::1], float32[::1], float64[::1])", cache=True, nogil=True)
def _sqdist_rows(rows, query, out):
    # four interleaved accumulators hide the float64 add latency; the
    # combination order is fixed, so results are reproducible
    n, d = rows.shape
    for i in range(n):
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        k = 0
        while k + 4 <= d:
            e0 = np.float64(rows[i, k]) - np.float64(query[k])
            e1 = np.float64(rows[i, k + 1]) - np.float64(query[k + 1])
            e2 = np.float64(rows[i, k + 2]) - np.float64(query[k + 2])
            e3 = np.float64(rows[i, k + 3]) - np.float64(query[k + 3])
            s0 += e0 * e0
            s1 += e1 * e1
            s2 += e2 * e2
            s3 += e3 * e3
            k += 4
        while k < d:
            e = np.float64(rows[i, k]) - np.float64(query[k])
            s0 += e * e
            k += 1
        out[i] = np.sqrt((s0 + s1) + (s2 + s3))


@numba.njit("float64(float32[::1], float32[::1])", cache=True, nogil=True)
def _sad_sum(a, b):
    # sequential accumulation, bit-identical to a scalar python loop
    s = 0.0
    for k in range(a.shape[0]):
        s += abs(np.float64(a[k]) - np.float64(b[k]))
    return s


def _as_vector(v) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise ValueError(f"expected a 1-D feature vector, got shape {arr.shape}")
    return arr


def distances_to_rows(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Euclidean distance from `query` to every row of `rows`, as float64."""
    rows = np.ascontiguousarray(rows, dtype=np.float32)
    query = _as_vector(query)
    if rows.shape[1] != query.shape[0]:
        raise ValueError(f"dimension mismatch: rows are {rows.shape[1]}-D, query is {query.shape[0]}-D")
    out = np.empty(rows.shape[0])
    _sqdist_rows(rows, query, out)
    return out


def euclidean_distance(a, b) -> float:
    """Euclidean distance between two equal-length feature vectors."""
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(distances_to_rows(a[None, :], b)[0])


def sad_distance(a, b) -> float:
    """Mean absolute difference between two equal-length vectors."""
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return _sad_sum(a, b) / a.shape[0]


def sad_offset_from_grids(ga: np.ndarray, gb: np.ndarray, max_offset: int) -> float:
    """Minimum mean absolute difference over horizontal grid shifts.

    For each offset o in [-max_offset, max_offset] the two side x side
    grids are compared on their overlapping columns only (mean over the
    overlap); the smallest mean wins. Offset 0 reproduces the plain SAD
    of the flattened grids.
    """
    ga = np.ascontiguousarray(ga, dtype=np.float32)
    gb = np.ascontiguousarray(gb, dtype=np.float32)
    if ga.shape != gb.shape or ga.ndim != 2:
        raise ValueError(f"grids must share a 2-D shape, got {ga.shape} vs {gb.shape}")
    side = ga.shape[1]
    if not (0 <= max_offset < side):
        raise ValueError(f"max_offset must be in [0, {side - 1}], got {max_offset}")
    best = np.inf
    for o in range(-max_offset, max_offset + 1):
        if o >= 0:
            a_reg = ga[:, o:]
            b_reg = gb[:, : side - o]
        else:
            a_reg = ga[:, : side + o]
            b_reg = gb[:, -o:]
        a_flat = np.ascontiguousarray(a_reg).ravel()
        b_flat = np.ascontiguousarray(b_reg).ravel()
        mean = _sad_sum(a_flat, b_flat) / a_flat.shape[0]
        if mean < best:
            best = mean
    return best


def sad_offset_distance(img_a, img_b, side: int, max_offset: int = 4) -> float:
    """Offset-tolerant SAD between two preprocessed images.

    Both images are block-averaged to side x side grids first; see
    :func:`sad_offset_from_grids` for the shift search.
    """
    ga = block_average_grid(img_a, side).astype(np.float32)
    gb = block_average_grid(img_b, side).astype(np.float32)
    if ga.shape != gb.shape:
        raise ValueError("images must share dimensions")
    return sad_offset_from_grids(ga, gb, max_offset)


@dataclass(frozen=True)
class ConfusionMatrix:
    """R x T float32 distance matrix; rows are training frames, columns testing."""

    distances: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.distances, dtype=np.float32)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"distances must be a non-empty 2-D matrix, got shape {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("distances must be finite")
        if (d < 0).any():
            raise ValueError("distances must be non-negative")
        object.__setattr__(self, "distances", d)

    @property
    def train_count(self) -> int:
        return self.distances.shape[0]

    @property
    def test_count(self) -> int:
        return self.distances.shape[1]

    def column(self, j: int) -> np.ndarray:
        """Distances from every training frame to testing frame j."""
        return self.distances[:, j]

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.distances.shape == other.distances.shape and np.array_equal(
            self.distances, other.distances
        )


@dataclass(frozen=True)
class MatchHypothesis:
    """Best training frame for one testing frame: the column argmin."""

    test_index: int
    train_index: int
    distance: float
    plausible: bool = False


def build_confusion_matrix(
    train: FeatureSet,
    test: FeatureSet,
    metric: str = "l2",
    sad_offset: int = 0,
    threads: int = 1,
) -> ConfusionMatrix:
    """All-pairs distance matrix between a training and a testing traverse.

    metric "l2" is the Euclidean kernel; "sad" is mean absolute difference,
    optionally with horizontal offset tolerance (`sad_offset` > 0 requires a
    square feature dimension, vectors are reshaped to side x side grids).
    Results are bit-identical regardless of `threads`.
    """
    if train.count == 0 or test.count == 0:
        raise ValueError("confusion matrix needs non-empty feature sets")
    if train.dim != test.dim:
        raise ValueError(f"dimension mismatch: train {train.dim} vs test {test.dim}")
    r, t = train.count, test.count
    out = np.empty((r, t), dtype=np.float32)

    if metric == "l2":
        def fill(j0, j1):
            for j in range(j0, j1):
                out[:, j] = distances_to_rows(train.frames, test.frames[j])
    elif metric == "sad":
        side = None
        if sad_offset > 0:
            side = int(np.sqrt(train.dim))
            if side * side != train.dim:
                raise ValueError(
                    f"offset matching needs a square dimension, got {train.dim}"
                )
            if sad_offset >= side:
                raise ValueError(f"max offset {sad_offset} must be below grid side {side}")
            tr_grids = train.frames.reshape(r, side, side)
            te_grids = test.frames.reshape(t, side, side)

        def fill(j0, j1):
            for j in range(j0, j1):
                for i in range(r):
                    if sad_offset > 0:
                        out[i, j] = sad_offset_from_grids(tr_grids[i], te_grids[j], sad_offset)
                    else:
                        out[i, j] = _sad_sum(train.frames[i], test.frames[j]) / train.dim
    else:
        raise ValueError(f"unknown metric {metric!r}")

    if threads <= 1 or t == 1:
        fill(0, t)
    else:
        workers = min(threads, t)
        bounds = np.linspace(0, t, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            jobs = [pool.submit(fill, bounds[w], bounds[w + 1]) for w in range(workers)]
            for job in jobs:
                job.result()
    return ConfusionMatrix(out)


def best_matches(cm: ConfusionMatrix) -> list[MatchHypothesis]:
    """Per-column argmin hypotheses; ties break to the lowest training index."""
    hyps = []
    for j in range(cm.test_count):
        col = cm.column(j)
        i = int(np.argmin(col))
        hyps.append(MatchHypothesis(test_index=j, train_index=i, distance=float(col[i])))
    return hyps


def save_confusion_matrix(cm: ConfusionMatrix, path) -> None:
    """Write the binary matrix file (little-endian, magic CONFMAT1)."""
    with open(path, "wb") as fh:
        fh.write(CONFMAT_MAGIC)
        fh.write(struct.pack("<II", cm.train_count, cm.test_count))
        fh.write(cm.distances.astype("<f4").tobytes())


def load_confusion_matrix(path) -> ConfusionMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:8] != CONFMAT_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {CONFMAT_MAGIC.decode()}")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    r, t = struct.unpack("<II", blob[8:16])
    expected = r * t * 4
    payload = blob[16:]
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}")
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    return ConfusionMatrix(np.frombuffer(payload, dtype="<f4").reshape(r, t))
