"""Seeded weather overlays and joint image/label training augmentations.

Every operation here is a pure function of (inputs, seed): running it twice
produces byte-identical output. Randomness comes from numpy's PCG64 via
``default_rng``, and per-image seeds are derived with :func:`derive_seed` so a
dataset regenerates identically regardless of worker count or platform.

Weather marks are procedural: seeded streaks (rain), seeded disks (snow), a
uniform veil (fog), and a radial flash (lightning). Each kind produces a
per-pixel alpha field and an overlay color, composited as
``out = (1 - a) * image + a * overlay`` per channel.

Draw orders are part of the contract so tests can replay them:
  rain     per streak: x center, y center (two uniform doubles)
  snow     per particle: x center, y center, radius (three uniform doubles)
  photometric  gate for each sub-transform drawn before its parameter, in the
               fixed sequence brightness, contrast, saturation, hue; the
               parameter is drawn only when its gate passes
  scale/crop   short side (one integer), then crop x offset, then y offset
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ImageRGB, LabelMap, resize_image, resize_labels
from .errors import (
    DimMismatch,
    InvalidParams,
    InvalidRange,
    InvalidSpec,
    IoFailure,
    SchemaError,
)

WEATHER_KINDS = ("rain", "snow", "fog", "lightning")

RAIN_COLOR = (202, 210, 228)
SNOW_COLOR = (250, 250, 252)
FLASH_COLOR = (255, 255, 255)
RAIN_ALPHA = 0.7   # streak opacity at intensity 1
SNOW_ALPHA = 0.85  # particle opacity at intensity 1
STREAK_HALF_WIDTH = 0.6


def derive_seed(global_seed: int, token: str) -> int:
    """Mix a global seed with a string token into an independent 64-bit seed."""
    key = (global_seed % 2**64).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class WeatherMarkParams:
    """One weather overlay: its kind, strength, seed, and kind-specific knobs.

    ``density`` counts marks per megapixel and applies to rain (streaks) and
    snow (particles). ``angle_deg`` is the streak slant, clockwise from
    vertical. ``center`` is the flash center in fractional image coordinates
    and ``falloff`` its radial extent as a fraction of the image diagonal.
    """

    kind: str
    intensity: float
    seed: int = 0
    angle_deg: float = 65.0
    streak_len: float = 12.0
    density: float = 600.0
    radius_min: float = 1.0
    radius_max: float = 2.5
    fog_color: tuple[int, int, int] = (255, 255, 255)
    center: tuple[float, float] = (0.5, 0.3)
    falloff: float = 0.35

    def __post_init__(self) -> None:
        if self.kind not in WEATHER_KINDS:
            raise InvalidParams(f"unknown weather kind {self.kind!r}")
        if not (0.0 <= self.intensity <= 1.0):
            raise InvalidParams(f"intensity must lie in [0, 1], got {self.intensity}")
        if self.density < 0:
            raise InvalidParams(f"density must be >= 0, got {self.density}")
        if self.streak_len <= 0:
            raise InvalidParams(f"streak length must be > 0, got {self.streak_len}")
        if not (0 <= self.radius_min <= self.radius_max):
            raise InvalidParams(
                f"particle radius range [{self.radius_min}, {self.radius_max}] is invalid"
            )
        if len(self.fog_color) != 3 or any(not (0 <= c <= 255) for c in self.fog_color):
            raise InvalidParams(f"fog color must be three 8-bit values, got {self.fog_color}")
        if self.falloff <= 0:
            raise InvalidParams(f"falloff must be > 0, got {self.falloff}")


def _mark_count(params: WeatherMarkParams, w: int, h: int) -> int:
    return int(round(params.density * (w * h) / 1e6))


def _stamp_segment(mask: np.ndarray, ax: float, ay: float, bx: float, by: float, radius: float) -> None:
    """Set pixels whose center lies within ``radius`` of segment a-b."""
    h, w = mask.shape
    x_lo = max(0, int(math.floor(min(ax, bx) - radius)))
    x_hi = min(w - 1, int(math.ceil(max(ax, bx) + radius)))
    y_lo = max(0, int(math.floor(min(ay, by) - radius)))
    y_hi = min(h - 1, int(math.ceil(max(ay, by) + radius)))
    if x_lo > x_hi or y_lo > y_hi:
        return
    px, py = np.meshgrid(
        np.arange(x_lo, x_hi + 1, dtype=np.float64),
        np.arange(y_lo, y_hi + 1, dtype=np.float64),
    )
    ex, ey = bx - ax, by - ay
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
    dx = px - (ax + t * ex)
    dy = py - (ay + t * ey)
    mask[y_lo : y_hi + 1, x_lo : x_hi + 1] |= dx * dx + dy * dy <= radius * radius


def _stamp_disk(mask: np.ndarray, cx: float, cy: float, radius: float) -> None:
    h, w = mask.shape
    x_lo = max(0, int(math.floor(cx - radius)))
    x_hi = min(w - 1, int(math.ceil(cx + radius)))
    y_lo = max(0, int(math.floor(cy - radius)))
    y_hi = min(h - 1, int(math.ceil(cy + radius)))
    if x_lo > x_hi or y_lo > y_hi:
        return
    px, py = np.meshgrid(
        np.arange(x_lo, x_hi + 1, dtype=np.float64),
        np.arange(y_lo, y_hi + 1, dtype=np.float64),
    )
    dx = px - cx
    dy = py - cy
    mask[y_lo : y_hi + 1, x_lo : x_hi + 1] |= dx * dx + dy * dy <= radius * radius


def rain_mask(w: int, h: int, params: WeatherMarkParams) -> np.ndarray:
    """Boolean streak coverage for the seeded streak set (exposed for tests)."""
    rng = np.random.default_rng(params.seed)
    mask = np.zeros((h, w), dtype=bool)
    theta = math.radians(params.angle_deg)
    ux, uy = math.sin(theta), math.cos(theta)
    half = params.streak_len / 2.0
    for _ in range(_mark_count(params, w, h)):
        x0 = rng.uniform(0.0, w)
        y0 = rng.uniform(0.0, h)
        _stamp_segment(
            mask,
            x0 - ux * half, y0 - uy * half,
            x0 + ux * half, y0 + uy * half,
            STREAK_HALF_WIDTH,
        )
    return mask


def snow_mask(w: int, h: int, params: WeatherMarkParams) -> np.ndarray:
    """Boolean particle coverage for the seeded particle set (exposed for tests)."""
    rng = np.random.default_rng(params.seed)
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(_mark_count(params, w, h)):
        cx = rng.uniform(0.0, w)
        cy = rng.uniform(0.0, h)
        r = rng.uniform(params.radius_min, params.radius_max)
        _stamp_disk(mask, cx, cy, r)
    return mask


def _overlay_for(image: ImageRGB, params: WeatherMarkParams):
    """Per-pixel alpha field and overlay color for one weather kind."""
    h, w = image.height, image.width
    if params.kind == "fog":
        alpha = np.full((h, w), params.intensity, dtype=np.float64)
        return alpha, params.fog_color
    if params.kind == "rain":
        alpha = rain_mask(w, h, params) * (RAIN_ALPHA * params.intensity)
        return alpha, RAIN_COLOR
    if params.kind == "snow":
        alpha = snow_mask(w, h, params) * (SNOW_ALPHA * params.intensity)
        return alpha, SNOW_COLOR
    # lightning: radial gaussian flash, no randomness involved
    cx = params.center[0] * (w - 1)
    cy = params.center[1] * (h - 1)
    sigma = params.falloff * math.hypot(w, h)
    px, py = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    d2 = (px - cx) ** 2 + (py - cy) ** 2
    alpha = params.intensity * np.exp(-d2 / (2.0 * sigma * sigma))
    return alpha, FLASH_COLOR


def apply_weather_mark(image: ImageRGB, params: WeatherMarkParams) -> ImageRGB:
    """Composite one procedural weather overlay onto a photo.

    ``out = (1 - a) * image + a * overlay`` per channel, where the alpha field
    depends on kind, seed, and intensity. Dimensions never change; zero
    intensity reproduces the input byte-for-byte.
    """
    alpha, color = _overlay_for(image, params)
    a = alpha[:, :, None]
    out = (1.0 - a) * image.data.astype(np.float64) + a * np.asarray(color, dtype=np.float64)
    return ImageRGB(np.clip(np.rint(out), 0, 255).astype(np.uint8))


# -- joint geometric transforms ----------------------------------------------

GEOMETRIC_OPS = ("identity", "hflip", "vflip", "rotate90", "scale", "crop", "pad")


@dataclass(frozen=True)
class GeometricSpec:
    """One coordinate transform applied identically to image and labels."""

    op: str
    k: int = 1
    factor: float = 1.0
    rect: tuple[int, int, int, int] | None = None
    dims: tuple[int, int] | None = None
    pad_value: int = 0

    def __post_init__(self) -> None:
        if self.op not in GEOMETRIC_OPS:
            raise InvalidSpec(f"unknown geometric op {self.op!r}")
        if self.op == "rotate90" and self.k not in (1, 2, 3):
            raise InvalidSpec(f"rotate90 takes k in {{1, 2, 3}}, got {self.k}")
        if self.op == "scale" and not (self.factor > 0):
            raise InvalidSpec(f"scale factor must be > 0, got {self.factor}")
        if self.op == "crop":
            if self.rect is None or len(self.rect) != 4:
                raise InvalidSpec("crop needs rect=(x, y, w, h)")
            x, y, w, h = self.rect
            if x < 0 or y < 0 or w < 1 or h < 1:
                raise InvalidSpec(f"degenerate crop rect {self.rect}")
        if self.op == "pad":
            if self.dims is None or len(self.dims) != 2:
                raise InvalidSpec("pad needs dims=(w, h)")
            if self.dims[0] < 1 or self.dims[1] < 1:
                raise InvalidSpec(f"degenerate pad dims {self.dims}")
            if not (0 <= self.pad_value <= 255):
                raise InvalidSpec(f"pad value must be 8-bit, got {self.pad_value}")


def _rot90_cw(arr: np.ndarray) -> np.ndarray:
    # Clockwise quarter turn: destination (x', y') = (h - 1 - y, x).
    if arr.ndim == 2:
        return arr.T[:, ::-1]
    return arr.transpose(1, 0, 2)[:, ::-1]


def joint_geometric(
    image: ImageRGB, labels: LabelMap, spec: GeometricSpec
) -> tuple[ImageRGB, LabelMap]:
    """Apply one geometric transform to an aligned (image, labels) pair.

    The same coordinate mapping is used for both: images resample bilinearly
    where fractional coordinates appear (scale), labels always use nearest
    neighbor, and padded label regions are filled with the ignore sentinel.
    """
    if image.data.shape[:2] != labels.data.shape:
        raise DimMismatch(
            f"image is {image.data.shape[:2]}, labels are {labels.data.shape}"
        )
    img = image.data
    lab = labels.data
    ignore = labels.ignore_index

    if spec.op == "identity":
        return image, labels
    if spec.op == "hflip":
        return (
            ImageRGB(np.ascontiguousarray(img[:, ::-1])),
            LabelMap(np.ascontiguousarray(lab[:, ::-1]), ignore),
        )
    if spec.op == "vflip":
        return (
            ImageRGB(np.ascontiguousarray(img[::-1])),
            LabelMap(np.ascontiguousarray(lab[::-1]), ignore),
        )
    if spec.op == "rotate90":
        for _ in range(spec.k):
            img = _rot90_cw(img)
            lab = _rot90_cw(lab)
        return ImageRGB(np.ascontiguousarray(img)), LabelMap(np.ascontiguousarray(lab), ignore)
    if spec.op == "scale":
        out_w = max(1, round(image.width * spec.factor))
        out_h = max(1, round(image.height * spec.factor))
        return (
            resize_image(image, out_w, out_h),
            resize_labels(labels, out_w, out_h),
        )
    if spec.op == "crop":
        x, y, w, h = spec.rect
        if x + w > image.width or y + h > image.height:
            raise InvalidSpec(
                f"crop rect {spec.rect} leaves the {image.width}x{image.height} source"
            )
        return (
            ImageRGB(np.ascontiguousarray(img[y : y + h, x : x + w])),
            LabelMap(np.ascontiguousarray(lab[y : y + h, x : x + w]), ignore),
        )
    # pad: anchor at top-left, fill image with pad_value and labels with ignore
    out_w, out_h = spec.dims
    if out_w < image.width or out_h < image.height:
        raise InvalidSpec(
            f"pad target {out_w}x{out_h} is smaller than source {image.width}x{image.height}"
        )
    img_out = np.full((out_h, out_w, 3), spec.pad_value, dtype=np.uint8)
    img_out[: image.height, : image.width] = img
    lab_out = np.full((out_h, out_w), ignore, dtype=np.int64)
    lab_out[: labels.height, : labels.width] = lab
    return ImageRGB(img_out), LabelMap(lab_out, ignore)


def _check_scale_args(short_min: int, short_max: int, long_cap: int, crop_w: int, crop_h: int) -> None:
    if not (1 <= short_min <= short_max):
        raise InvalidRange(f"short side range [{short_min}, {short_max}] is invalid")
    if long_cap < 1 or crop_w < 1 or crop_h < 1:
        raise InvalidRange(
            f"long cap {long_cap} and crop {crop_w}x{crop_h} must be >= 1"
        )


def random_scale_crop_pad(
    image: ImageRGB,
    labels: LabelMap,
    short_min: int = 448,
    short_max: int = 1882,
    long_cap: int = 3584,
    crop_w: int = 896,
    crop_h: int = 896,
    seed: int = 0,
) -> tuple[ImageRGB, LabelMap]:
    """Random-resize then random-crop, the standard training-crop recipe.

    The target short side is drawn uniformly from [short_min, short_max]; the
    aspect ratio is preserved unless the long side would exceed ``long_cap``,
    in which case the pair is rescaled so the long side lands exactly on the
    cap. Images smaller than the crop are padded bottom/right first (zeros for
    the image, ignore for labels), then a uniformly random crop window of
    crop_w x crop_h is taken.
    """
    _check_scale_args(short_min, short_max, long_cap, crop_w, crop_h)
    if image.data.shape[:2] != labels.data.shape:
        raise DimMismatch(
            f"image is {image.data.shape[:2]}, labels are {labels.data.shape}"
        )
    rng = np.random.default_rng(seed)
    target_short = int(rng.integers(short_min, short_max + 1))

    w, h = image.width, image.height
    factor = target_short / min(w, h)
    new_w = max(1, round(w * factor))
    new_h = max(1, round(h * factor))
    if max(new_w, new_h) > long_cap:
        factor = long_cap / max(w, h)
        if w >= h:
            new_w = long_cap
            new_h = max(1, round(h * factor))
        else:
            new_h = long_cap
            new_w = max(1, round(w * factor))
    image = resize_image(image, new_w, new_h)
    labels = resize_labels(labels, new_w, new_h)

    if new_w < crop_w or new_h < crop_h:
        pad = GeometricSpec(op="pad", dims=(max(new_w, crop_w), max(new_h, crop_h)))
        image, labels = joint_geometric(image, labels, pad)

    x0 = int(rng.integers(0, image.width - crop_w + 1))
    y0 = int(rng.integers(0, image.height - crop_h + 1))
    crop = GeometricSpec(op="crop", rect=(x0, y0, crop_w, crop_h))
    return joint_geometric(image, labels, crop)


# -- photometric distortion --------------------------------------------------

@dataclass(frozen=True)
class PhotometricConfig:
    """Ranges for the four photometric sub-transforms, each gated at ``apply_prob``."""

    brightness_delta: float = 32.0
    contrast_range: tuple[float, float] = (0.5, 1.5)
    saturation_range: tuple[float, float] = (0.5, 1.5)
    hue_delta_deg: float = 18.0
    apply_prob: float = 0.5

    def __post_init__(self) -> None:
        if self.brightness_delta < 0 or self.hue_delta_deg < 0:
            raise InvalidParams("brightness and hue deltas must be >= 0")
        for lo, hi in (self.contrast_range, self.saturation_range):
            if not (0 < lo <= hi):
                raise InvalidParams(f"gain range [{lo}, {hi}] is invalid")
        if not (0.0 <= self.apply_prob <= 1.0):
            raise InvalidParams(f"apply_prob must lie in [0, 1], got {self.apply_prob}")


def _rgb_to_hsv(rgb: np.ndarray):
    """Vectorized colorsys conversion; rgb in [0, 1], shape (..., 3)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    c = maxc - minc
    s = np.where(maxc > 0, c / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(c > 0, c, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(c > 0, (h / 6.0) % 1.0, 0.0)
    return h, s, v


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    rgb = np.empty(h.shape + (3,), dtype=np.float64)
    for idx, (rr, gg, bb) in enumerate(
        ((v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q))
    ):
        sel = i == idx
        rgb[..., 0][sel] = rr[sel]
        rgb[..., 1][sel] = gg[sel]
        rgb[..., 2][sel] = bb[sel]
    return rgb


def photometric_distort(
    image: ImageRGB, seed: int, config: PhotometricConfig | None = None
) -> ImageRGB:
    """Seeded brightness/contrast/saturation/hue jitter.

    Sub-transforms run in that fixed order; each one first draws its gate
    (``rng.random() < apply_prob``) and, only when the gate passes, draws its
    parameter uniformly from the configured range. Values are clamped to the
    8-bit range after every step. A seed whose gates all fail returns the
    input unchanged.
    """
    cfg = config if config is not None else PhotometricConfig()
    rng = np.random.default_rng(seed)
    v = image.data.astype(np.float64)
    applied = False

    if rng.random() < cfg.apply_prob:
        delta = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta)
        v = np.clip(v + delta, 0.0, 255.0)
        applied = True
    if rng.random() < cfg.apply_prob:
        gain = rng.uniform(*cfg.contrast_range)
        v = np.clip(v * gain, 0.0, 255.0)
        applied = True
    if rng.random() < cfg.apply_prob:
        gain = rng.uniform(*cfg.saturation_range)
        h, s, val = _rgb_to_hsv(v / 255.0)
        v = np.clip(_hsv_to_rgb(h, np.clip(s * gain, 0.0, 1.0), val) * 255.0, 0.0, 255.0)
        applied = True
    if rng.random() < cfg.apply_prob:
        shift = rng.uniform(-cfg.hue_delta_deg, cfg.hue_delta_deg)
        h, s, val = _rgb_to_hsv(v / 255.0)
        v = np.clip(_hsv_to_rgb((h + shift / 360.0) % 1.0, s, val) * 255.0, 0.0, 255.0)
        applied = True

    if not applied:
        return image
    return ImageRGB(np.clip(np.rint(v), 0, 255).astype(np.uint8))


# -- recipe files ------------------------------------------------------------

RECIPE_FORMAT = 1
RECIPE_OPS = ("weather", "geometric", "scale_crop_pad", "photometric")

_WEATHER_KNOBS = (
    "angle_deg", "streak_len", "density", "radius_min", "radius_max",
    "fog_color", "center", "falloff",
)
_SCALE_KNOBS = ("short_min", "short_max", "long_cap", "crop_w", "crop_h")
_PHOTO_KNOBS = ("brightness_delta", "contrast_range", "saturation_range", "hue_delta_deg", "apply_prob")


@dataclass(frozen=True)
class Recipe:
    """Ordered augmentation plan: a global seed plus op descriptors."""

    seed: int
    ops: tuple[dict, ...] = field(default_factory=tuple)


def _tupled(value):
    return tuple(value) if isinstance(value, list) else value


def parse_recipe(path: str | Path) -> Recipe:
    """Load and validate a JSON recipe; errors name the offending field."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"recipe is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("recipe root must be an object")
    if doc.get("format") != RECIPE_FORMAT:
        raise SchemaError(f"recipe.format must be {RECIPE_FORMAT}, got {doc.get('format')!r}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError(f"recipe.seed must be an integer, got {seed!r}")
    ops = doc.get("ops")
    if not isinstance(ops, list):
        raise SchemaError("recipe.ops must be a list")
    checked = []
    for i, op in enumerate(ops):
        where = f"recipe.ops[{i}]"
        if not isinstance(op, dict) or op.get("op") not in RECIPE_OPS:
            raise SchemaError(f"{where}.op must be one of {', '.join(RECIPE_OPS)}")
        try:
            _op_step(op, seed=0, scene_id="__validate__", index=i)
        except (InvalidParams, InvalidSpec, InvalidRange, KeyError, TypeError) as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        checked.append(op)
    return Recipe(seed=seed, ops=tuple(checked))


def _op_step(op: dict, seed: int, scene_id: str, index: int):
    """Build the configured callable for one recipe op (validating its knobs)."""
    op_seed = derive_seed(seed, f"{scene_id}/{index}/{op['op']}")
    kind = op["op"]
    if kind == "weather":
        knobs = {k: _tupled(op[k]) for k in _WEATHER_KNOBS if k in op}
        params = WeatherMarkParams(
            kind=op["kind"], intensity=op["intensity"], seed=op_seed, **knobs
        )
        return lambda img, lab: (apply_weather_mark(img, params), lab)
    if kind == "geometric":
        spec_doc = dict(op.get("spec") or {})
        spec_doc["rect"] = _tupled(spec_doc.get("rect"))
        spec_doc["dims"] = _tupled(spec_doc.get("dims"))
        spec = GeometricSpec(**{k: v for k, v in spec_doc.items() if v is not None})
        return lambda img, lab: joint_geometric(img, lab, spec)
    if kind == "scale_crop_pad":
        knobs = {k: op[k] for k in _SCALE_KNOBS if k in op}
        _check_scale_args(
            knobs.get("short_min", 448), knobs.get("short_max", 1882),
            knobs.get("long_cap", 3584), knobs.get("crop_w", 896), knobs.get("crop_h", 896),
        )
        return lambda img, lab: random_scale_crop_pad(img, lab, seed=op_seed, **knobs)
    knobs = {k: _tupled(op[k]) for k in _PHOTO_KNOBS if k in op}
    cfg = PhotometricConfig(**knobs)
    return lambda img, lab: (photometric_distort(img, op_seed, cfg), lab)


def apply_recipe(
    image: ImageRGB, labels: LabelMap, recipe: Recipe, scene_id: str
) -> tuple[ImageRGB, LabelMap]:
    """Run every recipe op in order on one aligned (image, labels) pair.

    Each op's seed mixes the recipe seed with the scene id and the op's
    position, so scenes are independent and reordering ops changes the output.
    """
    for i, op in enumerate(recipe.ops):
        step = _op_step(op, recipe.seed, scene_id, i)
        image, labels = step(image, labels)
    return image, labels
