"""File formats: label PNGs, RGB image PNGs, and the SFPM probability format.

Label rasters are single-channel PNGs, 8-bit normally and 16-bit once values
exceed 255. Probability rasters use SFPM, a minimal binary container:

    magic   4 bytes  "SFPM"
    version u16 LE   1
    C       u32 LE   class count
    W       u32 LE   width
    H       u32 LE   height
    data    C*W*H little-endian float32, plane-major, row-major per plane

Every format round-trips bit-exactly; write-then-read equals the input.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import ImageRGB, LabelMap, ProbMap
from .errors import BadFormat, BadMagic, BadVersion, DataError, IoFailure, TruncatedFile

SFPM_MAGIC = b"SFPM"
SFPM_VERSION = 1
_SFPM_HEADER = struct.Struct("<4sHIII")

_LABEL_MODES = {"L": np.uint8, "I": np.uint16, "I;16": np.uint16}


def write_label_png(labels: LabelMap, path: str | Path) -> None:
    """Write labels as a single-channel PNG; 16-bit when any value exceeds 255."""
    data = labels.data
    peak = int(data.max())
    if peak > 65535:
        raise BadFormat(f"label value {peak} does not fit a 16-bit PNG")
    dtype = np.uint8 if peak <= 255 else np.uint16
    try:
        Image.fromarray(data.astype(dtype)).save(path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_label_png(path: str | Path, ignore_index: int = 255) -> LabelMap:
    """Read a single-channel 8- or 16-bit PNG as labels."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode not in _LABEL_MODES:
                raise BadFormat(f"{path}: label PNG must be single-channel 8- or 16-bit, got mode {mode}")
            arr = np.array(img)
    except FileNotFoundError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except OSError as exc:
        raise BadFormat(f"{path}: not a readable PNG: {exc}") from exc
    if arr.ndim != 2:
        raise BadFormat(f"{path}: label PNG must be 2D, got shape {arr.shape}")
    target = _LABEL_MODES[mode]
    if mode == "I" and (arr.min() < 0 or arr.max() > 65535):
        raise BadFormat(f"{path}: 32-bit values exceed the 16-bit label range")
    return LabelMap(arr.astype(target), ignore_index=ignore_index)


def write_image_png(image: ImageRGB, path: str | Path) -> None:
    try:
        Image.fromarray(image.data, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_image_png(path: str | Path) -> ImageRGB:
    """Read any PIL-supported image as RGB (grayscale inputs are expanded)."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return ImageRGB(np.array(rgb))
    except FileNotFoundError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except OSError as exc:
        raise BadFormat(f"{path}: not a readable image: {exc}") from exc


def sfpm_to_bytes(prob: ProbMap) -> bytes:
    header = _SFPM_HEADER.pack(SFPM_MAGIC, SFPM_VERSION, prob.num_classes, prob.width, prob.height)
    return header + prob.data.astype("<f4", copy=False).tobytes()


def sfpm_from_bytes(buf: bytes) -> ProbMap:
    if len(buf) < 4 or buf[:4] != SFPM_MAGIC:
        if len(buf) >= 4:
            raise BadMagic(f"bad SFPM magic {buf[:4]!r}")
        raise TruncatedFile(f"SFPM data is {len(buf)} bytes, shorter than its magic")
    if len(buf) < _SFPM_HEADER.size:
        raise TruncatedFile(f"SFPM header truncated at {len(buf)} bytes")
    _, version, num_classes, width, height = _SFPM_HEADER.unpack_from(buf)
    if version != SFPM_VERSION:
        raise BadVersion(f"unsupported SFPM version {version}")
    if num_classes < 1 or width < 1 or height < 1:
        raise BadFormat(f"degenerate SFPM dims C={num_classes} W={width} H={height}")
    expected = _SFPM_HEADER.size + 4 * num_classes * width * height
    if len(buf) < expected:
        raise TruncatedFile(f"SFPM payload is {len(buf)} bytes, header promises {expected}")
    if len(buf) > expected:
        raise BadFormat(f"SFPM has {len(buf) - expected} trailing bytes")
    data = np.frombuffer(buf, dtype="<f4", offset=_SFPM_HEADER.size)
    try:
        return ProbMap(data.reshape(num_classes, height, width).copy())
    except DataError as exc:
        raise BadFormat(f"SFPM payload is invalid: {exc}") from exc


def write_sfpm(prob: ProbMap, path: str | Path) -> None:
    try:
        Path(path).write_bytes(sfpm_to_bytes(prob))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_sfpm(path: str | Path) -> ProbMap:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return sfpm_from_bytes(buf)
