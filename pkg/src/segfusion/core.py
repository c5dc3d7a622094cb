"""Raster value types and the resampling / argmax primitives shared everywhere.

Three immutable wrappers around numpy arrays form the package vocabulary:

* :class:`LabelMap` -- one class index per pixel, with an ignore sentinel,
* :class:`ProbMap` -- a per-pixel distribution over C classes, stored as
  C planes of H x W float32 (plane-major, row-major within a plane),
* :class:`ImageRGB` -- 8-bit RGB imagery.

All functions here are pure: inputs are never mutated and identical inputs
give identical outputs, so everything is safe to call from multiple threads.

Resampling convention: pixel centers are aligned, i.e. the source coordinate
for destination pixel ``d`` is ``(d + 0.5) * (src / dst) - 0.5``, clamped to
the source extent. Bilinear interpolation is evaluated in float64 as two
nested lerps (``a + f * (b - a)``), which keeps constant fields and identity
resizes exact, then cast back to float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassOutOfRange, DimMismatch, EmptyInput


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices with an ignore sentinel.

    ``data`` is a 2D integer array of shape (height, width). Values are class
    indices; pixels equal to ``ignore_index`` are excluded from evaluation.
    """

    data: np.ndarray
    ignore_index: int = 255

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data)
        if arr.ndim != 2:
            raise DimMismatch(f"label map must be 2D (H, W), got shape {arr.shape}")
        if arr.size == 0:
            raise EmptyInput("label map has zero pixels")
        if not np.issubdtype(arr.dtype, np.integer):
            raise DimMismatch(f"label map must have an integer dtype, got {arr.dtype}")
        if arr.min() < 0:
            raise ClassOutOfRange("label values must be non-negative")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel class probabilities: shape (num_classes, height, width), float32.

    Values must be finite and non-negative. A map is *normalized* when every
    pixel's class sum is within ``atol`` of 1; see :meth:`is_normalized`.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise DimMismatch(f"prob map must be 3D (C, H, W), got shape {arr.shape}")
        if arr.size == 0:
            raise EmptyInput("prob map has zero classes or zero pixels")
        if not np.isfinite(arr).all():
            raise ClassOutOfRange("prob map values must be finite")
        if arr.min() < 0.0:
            raise ClassOutOfRange("prob map values must be non-negative")
        object.__setattr__(self, "data", arr)

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    def is_normalized(self, atol: float = 1e-4) -> bool:
        sums = self.data.sum(axis=0, dtype=np.float64)
        return bool(np.abs(sums - 1.0).max() <= atol)


@dataclass(frozen=True)
class ImageRGB:
    """8-bit RGB image, shape (height, width, 3), dtype uint8."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimMismatch(f"image must have shape (H, W, 3), got {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise EmptyInput("image has zero pixels")
        if arr.dtype != np.uint8:
            raise DimMismatch(f"image must be uint8, got {arr.dtype}")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def label_dtype_for(num_classes: int) -> np.dtype:
    """Smallest unsigned dtype that can hold ``num_classes`` labels plus the
    8-bit ignore sentinel."""
    return np.dtype(np.uint8) if num_classes <= 256 else np.dtype(np.uint16)


def argmax_labels(prob: ProbMap, ignore_index: int = 255) -> LabelMap:
    """Collapse a probability map to labels; ties go to the smallest class index."""
    labels = np.argmax(prob.data, axis=0).astype(label_dtype_for(prob.num_classes))
    return LabelMap(labels, ignore_index=ignore_index)


def one_hot_prob(labels: LabelMap, num_classes: int) -> ProbMap:
    """One-hot probability map for ``labels``.

    Pixels equal to the ignore sentinel get the uniform distribution 1/C so
    the result stays normalized; everything else is exact 0/1 planes.
    """
    if num_classes < 1:
        raise EmptyInput("num_classes must be >= 1")
    data = labels.data
    ignored = data == labels.ignore_index
    if np.any(~ignored & (data >= num_classes)):
        raise ClassOutOfRange(
            f"label values must be < {num_classes} or == ignore_index {labels.ignore_index}"
        )
    planes = np.zeros((num_classes,) + data.shape, dtype=np.float32)
    safe = np.where(ignored, 0, data)
    np.put_along_axis(planes, safe[None].astype(np.int64), 1.0, axis=0)
    if ignored.any():
        planes[:, ignored] = np.float32(1.0 / num_classes)
    return ProbMap(planes)


def _center_coords(src: int, dst: int) -> np.ndarray:
    """Clamped center-aligned source coordinates for each destination index."""
    coords = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    return np.clip(coords, 0.0, src - 1)


def _bilinear_plane(plane: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resample one (H, W) plane bilinearly; returns float64 (out_h, out_w)."""
    src_h, src_w = plane.shape
    sx = _center_coords(src_w, out_w)
    sy = _center_coords(src_h, out_h)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = sx - x0
    fy = (sy - y0)[:, None]
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)

    p = np.asarray(plane, dtype=np.float64)
    a = p[np.ix_(y0, x0)]
    b = p[np.ix_(y0, x1)]
    c = p[np.ix_(y1, x0)]
    d = p[np.ix_(y1, x1)]
    top = a + fx * (b - a)
    bot = c + fx * (d - c)
    return top + fy * (bot - top)


def _nearest_indices(src: int, dst: int) -> np.ndarray:
    idx = np.floor((np.arange(dst, dtype=np.float64) + 0.5) * (src / dst)).astype(np.intp)
    return np.minimum(idx, src - 1)


def resize_prob(prob: ProbMap, out_w: int, out_h: int) -> ProbMap:
    """Bilinearly resample every class plane to ``out_w`` x ``out_h``.

    Resampling at the input's own dimensions is skipped entirely, so the
    returned values are bit-identical to the input in that case.
    """
    if out_w < 1 or out_h < 1:
        raise EmptyInput(f"output dims must be >= 1, got {out_w}x{out_h}")
    if out_w == prob.width and out_h == prob.height:
        return prob
    out = np.empty((prob.num_classes, out_h, out_w), dtype=np.float32)
    for i in range(prob.num_classes):
        out[i] = _bilinear_plane(prob.data[i], out_w, out_h)
    return ProbMap(out)


def resize_labels(labels: LabelMap, out_w: int, out_h: int) -> LabelMap:
    """Nearest-neighbor resample; never introduces values absent from the input."""
    if out_w < 1 or out_h < 1:
        raise EmptyInput(f"output dims must be >= 1, got {out_w}x{out_h}")
    if out_w == labels.width and out_h == labels.height:
        return labels
    xs = _nearest_indices(labels.width, out_w)
    ys = _nearest_indices(labels.height, out_h)
    return LabelMap(labels.data[np.ix_(ys, xs)], ignore_index=labels.ignore_index)


def resize_image(image: ImageRGB, out_w: int, out_h: int) -> ImageRGB:
    """Bilinearly resample an RGB image (rounded back to uint8)."""
    if out_w < 1 or out_h < 1:
        raise EmptyInput(f"output dims must be >= 1, got {out_w}x{out_h}")
    if out_w == image.width and out_h == image.height:
        return image
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    for ch in range(3):
        plane = _bilinear_plane(image.data[:, :, ch], out_w, out_h)
        out[:, :, ch] = np.clip(np.rint(plane), 0, 255).astype(np.uint8)
    return ImageRGB(out)
