"""Image preprocessing, pixel descriptors, and the feature-set container with file I/O.

Images are plain numpy arrays: uint8, shape (h, w) for grayscale or
(h, w, 3) for RGB, row-major. Feature vectors are float32 numpy arrays;
a whole traverse lives in a :class:`FeatureSet` (one row per frame, in
temporal order) regardless of whether the values came from a network
layer, a pixel descriptor, or a CSV import.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FEATURE_MAGIC = b"CNNFEAT1"
TARGET_SIDE = 256

# storage dtype codes in the binary header
DTYPE_CODES = {"float32": 0, "uint16": 1}
_DTYPE_NAMES = {v: k for k, v in DTYPE_CODES.items()}

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class FormatError(ValueError):
    """A file's bytes do not match its declared layout."""


def _check_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got dtype {img.dtype}")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"expected (h, w) or (h, w, 3) image, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("zero-sized image")
    return img


def to_grayscale(img) -> np.ndarray:
    """Collapse an RGB image to single-channel luma (0.299 R + 0.587 G + 0.114 B)."""
    img = _check_image(img)
    if img.ndim == 2:
        return img
    luma = img.astype(np.float64) @ _LUMA_WEIGHTS
    return np.rint(luma).astype(np.uint8)


def stretch_contrast(img) -> np.ndarray:
    """Min-max stretch a grayscale image to the full [0, 255] range.

    A constant image maps to all zeros rather than dividing by zero.
    """
    img = _check_image(img)
    if img.ndim != 2:
        raise ValueError("contrast stretch expects a single-channel image")
    lo = int(img.min())
    hi = int(img.max())
    if hi == lo:
        return np.zeros_like(img)
    scaled = (img.astype(np.float64) - lo) * (255.0 / (hi - lo))
    return np.rint(scaled).astype(np.uint8)


def resize_bilinear(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a grayscale image, pixel centers aligned.

    Resizing to the source size reproduces the input exactly.
    """
    img = _check_image(img)
    if img.ndim != 2:
        raise ValueError("resize expects a single-channel image")
    h, w = img.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    p = img.astype(np.float64)
    top = p[np.ix_(y0, x0)] * (1.0 - fx) + p[np.ix_(y0, x1)] * fx
    bot = p[np.ix_(y1, x0)] * (1.0 - fx) + p[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8)


def preprocess_image(img) -> np.ndarray:
    """Grayscale, resize to 256x256, then min-max stretch.

    The stretch runs last so the output always spans the full intensity
    range (or is all zero); applying the function twice therefore equals
    applying it once.
    """
    gray = to_grayscale(img)
    resized = resize_bilinear(gray, TARGET_SIDE, TARGET_SIDE)
    return stretch_contrast(resized)


def block_average_grid(img, side: int) -> np.ndarray:
    """Downsample a grayscale image to side x side by exact block averaging.

    Block boundaries are floor(i * extent / side); means are exact (integer
    sums in int64, one float64 division per block). Returns float64 (side, side).
    """
    img = _check_image(img)
    if img.ndim != 2:
        raise ValueError("pixel descriptors expect a single-channel image")
    h, w = img.shape
    if side < 1:
        raise ValueError("side must be >= 1")
    if side > min(h, w):
        raise ValueError(f"side {side} exceeds image extent {min(h, w)}")
    ii = np.zeros((h + 1, w + 1), dtype=np.int64)
    ii[1:, 1:] = img.astype(np.int64).cumsum(axis=0).cumsum(axis=1)
    rb = (np.arange(side + 1) * h) // side
    cb = (np.arange(side + 1) * w) // side
    sums = (
        ii[rb[1:, None], cb[None, 1:]]
        - ii[rb[:-1, None], cb[None, 1:]]
        - ii[rb[1:, None], cb[None, :-1]]
        + ii[rb[:-1, None], cb[None, :-1]]
    )
    counts = (rb[1:] - rb[:-1])[:, None] * (cb[1:] - cb[:-1])[None, :]
    return sums / counts


def pixel_descriptor(img, side: int) -> np.ndarray:
    """Flatten the side x side block-averaged image into a float32 vector."""
    return block_average_grid(img, side).ravel().astype(np.float32)


@dataclass(frozen=True)
class FeatureSet:
    """Per-frame feature vectors for one traverse, rows in temporal order.

    `frames` is (N, D) float32. `dtype` names the storage dtype used on
    disk; uint16 sets hold whole numbers in [0, 65535] that dequantize to
    the same float values (no scaling).
    """

    frames: np.ndarray
    layer_tag: int = 0
    dtype: str = "float32"
    source_label: str = ""

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2:
            raise ValueError(f"frames must be 2-D (N, D), got shape {frames.shape}")
        if frames.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        if not np.isfinite(frames).all():
            raise ValueError("feature values must be finite")
        if self.dtype not in DTYPE_CODES:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.dtype == "uint16":
            if (frames < 0).any() or (frames > 65535).any() or (frames != np.floor(frames)).any():
                raise ValueError("uint16 sets must hold whole numbers in [0, 65535]")
        if not (0 <= self.layer_tag <= 21):
            raise ValueError(f"layer_tag must be in [0, 21], got {self.layer_tag}")
        object.__setattr__(self, "frames", frames)

    @property
    def count(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            self.layer_tag == other.layer_tag
            and self.dtype == other.dtype
            and self.source_label == other.source_label
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


def save_feature_set(fs: FeatureSet, path) -> None:
    """Write the binary feature file (little-endian, magic CNNFEAT1)."""
    header = FEATURE_MAGIC + struct.pack(
        "<IIII", fs.layer_tag, fs.count, fs.dim, DTYPE_CODES[fs.dtype]
    )
    if fs.dtype == "uint16":
        payload = fs.frames.astype("<u2").tobytes()
    else:
        payload = fs.frames.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_feature_set(path, source_label: str | None = None) -> FeatureSet:
    """Read a binary feature file; inverse of :func:`save_feature_set`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:8] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {FEATURE_MAGIC.decode()}")
    if len(blob) < 24:
        raise FormatError(f"{path}: truncated header")
    layer_tag, count, dim, dtype_code = struct.unpack("<IIII", blob[8:24])
    if dtype_code not in _DTYPE_NAMES:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}")
    if dim < 1:
        raise FormatError(f"{path}: header dimension must be >= 1, got {dim}")
    dtype_name = _DTYPE_NAMES[dtype_code]
    itemsize = 2 if dtype_name == "uint16" else 4
    expected = count * dim * itemsize
    payload = blob[24:]
    if len(payload) < expected:
        have = len(payload) // (dim * itemsize) if dim else 0
        raise FormatError(
            f"{path}: truncated payload, header claims {count} frames but only {have} present"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    raw = np.frombuffer(payload, dtype="<u2" if dtype_name == "uint16" else "<f4")
    frames = raw.reshape(count, dim).astype(np.float32) if count else np.zeros((0, dim), np.float32)
    if source_label is None:
        source_label = ""
    return FeatureSet(frames, layer_tag=layer_tag, dtype=dtype_name, source_label=source_label)


def save_feature_set_csv(fs: FeatureSet, path) -> None:
    """Export features as CSV, one frame per line; inverse of the CSV loader.

    %.9g keeps enough digits that float32 values survive the round trip.
    """
    with open(path, "w", encoding="ascii") as fh:
        for row in fs.frames:
            fh.write(",".join(format(float(v), ".9g") for v in row))
            fh.write("\n")


def load_feature_set_csv(path, layer_tag: int = 0, source_label: str = "") -> FeatureSet:
    """Import features from CSV: one frame per line, comma-separated decimals."""
    rows = []
    dim = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values = [float(v) for v in line.split(",")]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} values per line, got {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no feature rows")
    return FeatureSet(np.array(rows, dtype=np.float32), layer_tag=layer_tag, source_label=source_label)
