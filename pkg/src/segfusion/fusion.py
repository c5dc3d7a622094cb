"""Sliding-window tiling and multi-scale / flip test-time aggregation.

Both work for any prediction producer: a callable taking an
:class:`~segfusion.core.ImageRGB` and returning a normalized
:class:`~segfusion.core.ProbMap` of the same dimensions with a fixed class
count. Large images are split into overlapping windows whose predictions are
averaged back onto the full canvas; test-time aggregation additionally runs
the producer on rescaled (and optionally mirrored) copies of the image and
averages everything mapped back to the original grid.

Determinism: tiles accumulate in plan order and variants in (scale ascending,
unflipped before flipped) order. Predictions may be computed concurrently,
but results are buffered and reduced in that canonical order, so the output
is independent of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._parallel import parallel_map
from .core import ImageRGB, ProbMap, resize_image, resize_prob
from .ensemble import soft_average
from .errors import CoverageGap, DimMismatch, InvalidGeometry

Rect = tuple[int, int, int, int]
Predictor = Callable[[ImageRGB], ProbMap]

# Endpoints 0.1 and 1.5 are fixed; the intermediate steps are a choice.
DEFAULT_TTA_SCALES = (0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5)


@dataclass(frozen=True)
class WindowParams:
    """Sliding-window geometry: window size and stride, in pixels."""

    window_w: int
    window_h: int
    stride_x: int
    stride_y: int

    def __post_init__(self) -> None:
        if self.window_w < 1 or self.window_h < 1:
            raise InvalidGeometry(f"window dims must be >= 1, got {self.window_w}x{self.window_h}")
        if self.stride_x < 1 or self.stride_y < 1:
            raise InvalidGeometry(f"strides must be >= 1, got {self.stride_x},{self.stride_y}")


@dataclass(frozen=True)
class TilePlan:
    """Concrete window layout over one source image.

    ``windows`` holds (x, y, w, h) rectangles in source coordinates, in
    row-major scan order. Every window lies fully inside the source and their
    union covers every source pixel.
    """

    window_w: int
    window_h: int
    stride_x: int
    stride_y: int
    windows: tuple[Rect, ...]


@dataclass(frozen=True)
class TtaConfig:
    """Test-time aggregation: scale set, mirror flag, optional windowing."""

    scales: tuple[float, ...] = DEFAULT_TTA_SCALES
    horizontal_flip: bool = False
    window: WindowParams | None = None

    def __post_init__(self) -> None:
        if len(self.scales) == 0:
            raise InvalidGeometry("scale set must be non-empty")
        for s in self.scales:
            if not (0.0 < s <= 8.0):
                raise InvalidGeometry(f"scales must lie in (0, 8], got {s}")


def _axis_starts(src: int, window: int, stride: int) -> list[int]:
    if window >= src:
        return [0]
    starts = list(range(0, src - window + 1, stride))
    if starts[-1] + window < src:
        starts.append(src - window)
    return starts


def plan_tiles(
    src_w: int,
    src_h: int,
    window_w: int,
    window_h: int,
    stride_x: int,
    stride_y: int,
) -> TilePlan:
    """Lay out sliding windows over a ``src_w`` x ``src_h`` image.

    Windows step by the stride; the final window per axis is shifted back so
    it ends exactly at the image border (full coverage, no out-of-bounds
    reads). A window covering the whole axis yields a single full-extent one.
    """
    if src_w < 1 or src_h < 1:
        raise InvalidGeometry(f"source dims must be >= 1, got {src_w}x{src_h}")
    params = WindowParams(window_w, window_h, stride_x, stride_y)
    w = min(window_w, src_w)
    h = min(window_h, src_h)
    # A stride wider than the window would leave uncovered gaps between
    # consecutive tiles; clamp it so the coverage invariant always holds.
    xs = _axis_starts(src_w, w, min(stride_x, w))
    ys = _axis_starts(src_h, h, min(stride_y, h))
    windows = tuple((x, y, w, h) for y in ys for x in xs)
    return TilePlan(params.window_w, params.window_h, params.stride_x, params.stride_y, windows)


def fuse_tiles(
    tiles: Sequence[tuple[Rect, ProbMap]],
    canvas_w: int,
    canvas_h: int,
    num_classes: int,
) -> ProbMap:
    """Average per-tile probability maps onto a full canvas.

    Each pixel's value is the sum of all covering tiles divided by its
    coverage count; accumulation runs in tile list order.
    """
    if canvas_w < 1 or canvas_h < 1 or num_classes < 1:
        raise InvalidGeometry(f"canvas must be non-empty, got {canvas_w}x{canvas_h} C={num_classes}")
    acc = np.zeros((num_classes, canvas_h, canvas_w), dtype=np.float32)
    coverage = np.zeros((canvas_h, canvas_w), dtype=np.int32)
    for rect, prob in tiles:
        x, y, w, h = rect
        if x < 0 or y < 0 or x + w > canvas_w or y + h > canvas_h:
            raise DimMismatch(f"tile rect {rect} exceeds canvas {canvas_w}x{canvas_h}")
        if (prob.width, prob.height) != (w, h):
            raise DimMismatch(f"tile map is {prob.width}x{prob.height} for rect {rect}")
        if prob.num_classes != num_classes:
            raise DimMismatch(f"tile has {prob.num_classes} classes, expected {num_classes}")
        acc[:, y : y + h, x : x + w] += prob.data
        coverage[y : y + h, x : x + w] += 1
    if coverage.min() == 0:
        gaps = int((coverage == 0).sum())
        raise CoverageGap(f"{gaps} canvas pixels are covered by no tile")
    return ProbMap(acc / coverage.astype(np.float32))


def _scaled_dims(width: int, height: int, scale: float) -> tuple[int, int]:
    return max(1, round(width * scale)), max(1, round(height * scale))


def _hflip_image(image: ImageRGB) -> ImageRGB:
    return ImageRGB(np.ascontiguousarray(image.data[:, ::-1]))


def _hflip_prob(prob: ProbMap) -> ProbMap:
    return ProbMap(np.ascontiguousarray(prob.data[:, :, ::-1]))


def tta_aggregate(
    image: ImageRGB,
    cfg: TtaConfig,
    predict: Predictor,
    jobs: int = 1,
) -> ProbMap:
    """Average predictions over rescaled (and mirrored) copies of ``image``.

    For each scale, ascending, with the unflipped variant before the flipped
    one: resize the image, predict (tiled via :func:`fuse_tiles` when
    ``cfg.window`` is set), map the result back to the original grid, undo the
    flip, then average all variants with equal weights. ``jobs`` > 1 runs
    predictor calls concurrently; the result does not depend on it.
    """
    variants: list[tuple[ImageRGB, bool, TilePlan | None]] = []
    requests: list[ImageRGB] = []
    spans: list[tuple[int, int]] = []
    for scale in sorted(cfg.scales):
        sw, sh = _scaled_dims(image.width, image.height, scale)
        scaled = resize_image(image, sw, sh)
        for flipped in (False, True) if cfg.horizontal_flip else (False,):
            view = _hflip_image(scaled) if flipped else scaled
            if cfg.window is None:
                plan = None
                spans.append((len(requests), 1))
                requests.append(view)
            else:
                plan = plan_tiles(
                    sw, sh, cfg.window.window_w, cfg.window.window_h,
                    cfg.window.stride_x, cfg.window.stride_y,
                )
                spans.append((len(requests), len(plan.windows)))
                for x, y, w, h in plan.windows:
                    requests.append(ImageRGB(np.ascontiguousarray(view.data[y : y + h, x : x + w])))
            variants.append((view, flipped, plan))

    results = parallel_map(predict, requests, jobs)

    num_classes: int | None = None
    merged: list[ProbMap] = []
    for (view, flipped, plan), (start, count) in zip(variants, spans):
        outputs = results[start : start + count]
        for req, out in zip(requests[start : start + count], outputs):
            if (out.width, out.height) != (req.width, req.height):
                raise DimMismatch(
                    f"predictor returned {out.width}x{out.height} for a "
                    f"{req.width}x{req.height} input"
                )
            if num_classes is None:
                num_classes = out.num_classes
            elif out.num_classes != num_classes:
                raise DimMismatch(
                    f"predictor changed class count: {out.num_classes} != {num_classes}"
                )
        if plan is None:
            prob = outputs[0]
        else:
            prob = fuse_tiles(list(zip(plan.windows, outputs)), view.width, view.height, num_classes)
        if flipped:
            prob = _hflip_prob(prob)
        merged.append(resize_prob(prob, image.width, image.height))

    return soft_average(merged)
