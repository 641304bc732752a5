"""Batch export of backbone layer activations to the binary feature format.

The backbone is torchvision's AlexNet viewed as a flat list of 21
modules: 13 feature-stage modules, the adaptive average pool, then the 7
classifier modules. `layer` k in [1, 21] selects the output of the k-th
module; activations are flattened to one vector per image and written to
a CNNFEAT1 file (little-endian header: layer tag, frame count, dimension,
dtype code) that the matching pipeline's loader reads directly. This
module deliberately has no dependency on that pipeline's code; the file
format is the whole interface.

Inference is deterministic: eval mode, no gradients, a single torch
thread, and (for random weights) a fixed seed, so the same directory
always produces byte-identical output.
"""

from __future__ import annotations

import os
import struct
import sys
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision.models import AlexNet_Weights, alexnet

FEATURE_MAGIC = b"CNNFEAT1"
DTYPE_FLOAT32 = 0
DTYPE_UINT16 = 1

LAYER_COUNT = 21
TARGET_SIDE = 256

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif", ".tiff"}

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ExtractionSpec:
    """What to extract: which images, which layer, where to, and how.

    weights is "pretrained", "random", or a path to a saved state dict.
    With "random" the seed fixes the initialization, giving a cheap
    deterministic feature map for tests and offline runs (the features
    are structured but not semantic).
    """

    images_dir: str
    layer: int
    out_path: str
    weights: str = "pretrained"
    seed: int = 0
    quantize_u16: bool = False
    batch_size: int = 8
    skip_unreadable: bool = False
    stretch: bool = True

    def __post_init__(self):
        if not (1 <= self.layer <= LAYER_COUNT):
            raise ValueError(
                f"layer must be in [1, {LAYER_COUNT}], got {self.layer}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def list_images(directory) -> list:
    """Image paths in lexicographic filename order; that order is the frame order."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"no such image directory: {directory}")
    names = sorted(
        n for n in os.listdir(directory)
        if os.path.splitext(n)[1].lower() in IMAGE_EXTENSIONS
    )
    return [os.path.join(directory, n) for n in names]


def _to_grayscale(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    luma = img.astype(np.float64) @ _LUMA_WEIGHTS
    return np.rint(luma).astype(np.uint8)


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    # pixel-center alignment; identity when the size already matches
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


def _stretch(img: np.ndarray) -> np.ndarray:
    lo = int(img.min())
    hi = int(img.max())
    if hi == lo:
        return np.zeros_like(img)
    return np.rint((img.astype(np.float64) - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def preprocess(img: np.ndarray, stretch: bool = True) -> np.ndarray:
    """Grayscale, bilinear resize to 256x256, optional min-max stretch."""
    gray = _to_grayscale(img)
    resized = _resize_bilinear(gray, TARGET_SIDE, TARGET_SIDE)
    return _stretch(resized) if stretch else resized


def _load_image(path: str) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode in ("L", "RGB"):
            return np.asarray(img, dtype=np.uint8)
        if img.mode in ("1", "I", "I;16", "F", "LA"):
            return np.asarray(img.convert("L"), dtype=np.uint8)
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def build_backbone(weights: str, seed: int) -> torch.nn.Module:
    """AlexNet in eval mode with the requested weights.

    "random" seeds torch before construction so initialization is
    reproducible; a path loads a saved state dict onto the CPU.
    """
    if weights == "pretrained":
        model = alexnet(weights=AlexNet_Weights.IMAGENET1K_V1)
    elif weights == "random":
        torch.manual_seed(seed)
        model = alexnet(weights=None)
    else:
        if not os.path.exists(weights):
            raise FileNotFoundError(f"no such weights file: {weights}")
        model = alexnet(weights=None)
        model.load_state_dict(torch.load(weights, map_location="cpu"))
    return model.eval()


def _forward_to_layer(model: torch.nn.Module, batch: torch.Tensor, layer: int) -> torch.Tensor:
    """Run modules 1..layer and flatten to (batch, dim).

    Modules 1-13 are the feature stage, 14 the average pool, 15-21 the
    classifier (which operates on flattened activations).
    """
    spatial = list(model.features) + [model.avgpool]
    x = batch
    for k, module in enumerate(spatial, start=1):
        x = module(x)
        if k == layer:
            return torch.flatten(x, 1)
    x = torch.flatten(x, 1)
    for k, module in enumerate(model.classifier, start=len(spatial) + 1):
        x = module(x)
        if k == layer:
            return x
    raise ValueError(f"layer {layer} not reached; backbone has {LAYER_COUNT} modules")


def _quantize_u16(rows: np.ndarray) -> np.ndarray:
    """Affine min-max map of the whole file's values onto [0, 65535].

    Self-contained per file; traverses meant for cross-file comparison
    should stay float32 or share one scale upstream.
    """
    lo = float(rows.min())
    hi = float(rows.max())
    if hi == lo:
        return np.zeros(rows.shape, dtype=np.uint16)
    scaled = (rows.astype(np.float64) - lo) * (65535.0 / (hi - lo))
    return np.rint(scaled).astype(np.uint16)


def extract_layer_activations(spec: ExtractionSpec) -> tuple:
    """Write one flattened activation vector per image; returns (count, dim).

    Frames appear in lexicographic filename order. Unreadable images
    either abort the run or are skipped with a warning on stderr,
    depending on spec.skip_unreadable.
    """
    paths = list_images(spec.images_dir)
    frames = []
    for path in paths:
        try:
            frames.append(_load_image(path))
        except (UnidentifiedImageError, OSError) as exc:
            if not spec.skip_unreadable:
                raise ValueError(f"unreadable image {path}: {exc}") from None
            print(f"warning: skipping unreadable image {path}", file=sys.stderr)
    if not frames:
        raise ValueError(f"{spec.images_dir}: no readable images")

    torch.set_num_threads(1)
    model = build_backbone(spec.weights, spec.seed)

    rows = []
    with torch.no_grad():
        for start in range(0, len(frames), spec.batch_size):
            chunk = frames[start : start + spec.batch_size]
            tensors = []
            for img in chunk:
                pre = preprocess(img, stretch=spec.stretch).astype(np.float32) / 255.0
                tensors.append(torch.from_numpy(pre).expand(3, -1, -1))
            batch = torch.stack(tensors)
            out = _forward_to_layer(model, batch, spec.layer)
            rows.append(out.numpy().astype(np.float32))
    activations = np.concatenate(rows, axis=0)
    count, dim = activations.shape

    if spec.quantize_u16:
        payload = _quantize_u16(activations).astype("<u2").tobytes()
        dtype_code = DTYPE_UINT16
    else:
        payload = activations.astype("<f4").tobytes()
        dtype_code = DTYPE_FLOAT32
    header = FEATURE_MAGIC + struct.pack("<IIII", spec.layer, count, dim, dtype_code)
    with open(spec.out_path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return count, dim
