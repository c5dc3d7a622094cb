"""Confusion-matrix accumulation and the IoU family of metrics.

The confusion matrix is the sufficient statistic for everything reported
here: ``counts[g][p]`` is the number of evaluated pixels with ground truth
``g`` predicted as ``p``. Pixels whose ground truth equals the ignore
sentinel contribute nothing. Per-class IoU is ``tp / (tp + fp + fn)``; the
mean IoU averages only classes that occur at all (zero-union classes are
*absent*, not zero). Batch evaluation accumulates one global matrix across
all scenes; a per-scene mean is reported alongside, clearly labeled, for
toolchains that aggregate that way instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._parallel import parallel_map
from .core import LabelMap, argmax_labels
from .errors import (
    ClassOutOfRange,
    DimMismatch,
    MissingPrediction,
    NoValidPixels,
    UnreadableGroundTruth,
)
from .formats import read_label_png, read_sfpm
from .manifest import SceneManifest


@dataclass(frozen=True)
class ConfusionMatrix:
    """num_classes x num_classes pixel counts, ground truth along rows."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.counts, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimMismatch(f"confusion matrix must be square, got shape {arr.shape}")
        if arr.min() < 0:
            raise ClassOutOfRange("confusion counts must be non-negative")
        object.__setattr__(self, "counts", arr)

    @classmethod
    def zeros(cls, num_classes: int) -> ConfusionMatrix:
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(cm: ConfusionMatrix, gt: LabelMap, pred: LabelMap) -> ConfusionMatrix:
    """Add one (ground truth, prediction) pair of label maps to the matrix."""
    if (gt.width, gt.height) != (pred.width, pred.height):
        raise DimMismatch(
            f"gt is {gt.width}x{gt.height}, prediction is {pred.width}x{pred.height}"
        )
    n = cm.num_classes
    g = gt.data.ravel().astype(np.int64)
    p = pred.data.ravel().astype(np.int64)
    if p.max() >= n:
        raise ClassOutOfRange(f"prediction value {int(p.max())} >= num_classes {n}")
    keep = g != gt.ignore_index
    g = g[keep]
    if g.size and g.max() >= n:
        raise ClassOutOfRange(
            f"ground-truth value {int(g.max())} >= num_classes {n} and != ignore_index"
        )
    delta = np.bincount(g * n + p[keep], minlength=n * n).reshape(n, n)
    return ConfusionMatrix(cm.counts + delta)


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Element-wise sum; the deterministic reduction for parallel accumulation."""
    if a.num_classes != b.num_classes:
        raise DimMismatch(f"cannot merge {a.num_classes}- and {b.num_classes}-class matrices")
    return ConfusionMatrix(a.counts + b.counts)


def iou_per_class(cm: ConfusionMatrix) -> list[float | None]:
    """IoU per class; classes with zero union come back as None (absent)."""
    diag = cm.counts.diagonal()
    union = cm.counts.sum(axis=1) + cm.counts.sum(axis=0) - diag
    return [
        (int(tp) / int(u)) if u > 0 else None
        for tp, u in zip(diag, union)
    ]


def miou(cm: ConfusionMatrix) -> float:
    """Arithmetic mean of the per-class IoUs that are present."""
    present = [v for v in iou_per_class(cm) if v is not None]
    if not present:
        raise NoValidPixels("every class has zero union; mIoU is undefined")
    return sum(present) / len(present)


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise NoValidPixels("no evaluated pixels")
    return int(cm.counts.trace()) / total


@dataclass(frozen=True)
class EvalReport:
    """Evaluation summary over one manifest.

    ``per_class_iou`` pairs each class name with its IoU or None when the
    class never occurs. ``miou`` is the mean of the present IoUs from the
    single global confusion matrix; ``per_scene_miou_mean`` is the alternative
    mean-of-scene-mIoUs aggregation. ``missing`` lists scene ids that had no
    prediction (non-strict mode only).
    """

    per_class_iou: tuple[tuple[str, float | None], ...]
    miou: float
    pixel_accuracy: float
    pixels_evaluated: int
    scenes_evaluated: int
    missing: tuple[str, ...] = ()
    per_scene_miou_mean: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "miou": self.miou,
            "pixel_accuracy": self.pixel_accuracy,
            "per_class": [{"name": name, "iou": iou} for name, iou in self.per_class_iou],
            "pixels": self.pixels_evaluated,
            "scenes": self.scenes_evaluated,
            "missing": list(self.missing),
            "per_scene_miou_mean": self.per_scene_miou_mean,
        }

    def to_text(self) -> str:
        lines = [
            f"miou                 {self.miou:.6f}",
            f"pixel_accuracy       {self.pixel_accuracy:.6f}",
            f"pixels_evaluated     {self.pixels_evaluated}",
            f"scenes_evaluated     {self.scenes_evaluated}",
        ]
        if self.per_scene_miou_mean is not None:
            lines.append(f"per_scene_miou_mean  {self.per_scene_miou_mean:.6f}")
        if self.missing:
            lines.append(f"missing_predictions  {', '.join(self.missing)}")
        lines.append("")
        width = max(len(name) for name, _ in self.per_class_iou)
        lines.append(f"{'class'.ljust(width)}  iou")
        for name, iou in self.per_class_iou:
            shown = "absent" if iou is None else f"{iou:.6f}"
            lines.append(f"{name.ljust(width)}  {shown}")
        return "\n".join(lines) + "\n"


def _prediction_labels(pred_dir: Path, scene_id: str, ignore_index: int) -> LabelMap | None:
    png = pred_dir / f"{scene_id}.png"
    if png.exists():
        return read_label_png(png, ignore_index=ignore_index)
    sfpm = pred_dir / f"{scene_id}.sfpm"
    if sfpm.exists():
        return argmax_labels(read_sfpm(sfpm), ignore_index=ignore_index)
    return None


def evaluate_manifest(
    manifest: SceneManifest,
    pred_dir: str | Path,
    strict: bool = False,
    jobs: int = 1,
) -> EvalReport:
    """Score predictions in ``pred_dir`` against every scene of the manifest.

    Predictions are label PNGs (or SFPM maps, collapsed by argmax) named
    ``<scene id>.png`` / ``<scene id>.sfpm``. Scenes without a prediction are
    recorded and skipped, or abort immediately in strict mode. Accumulation
    may run scene-parallel; the reduction order is the manifest order.
    """
    pred_dir = Path(pred_dir)
    n = manifest.num_classes

    def score_scene(scene) -> ConfusionMatrix | None:
        try:
            gt = read_label_png(scene.gt, ignore_index=manifest.ignore_index)
        except Exception as exc:
            raise UnreadableGroundTruth(f"scene {scene.id}: {exc}") from exc
        pred = _prediction_labels(pred_dir, scene.id, manifest.ignore_index)
        if pred is None:
            if strict:
                raise MissingPrediction(f"scene {scene.id}: no prediction in {pred_dir}")
            return None
        try:
            return accumulate(ConfusionMatrix.zeros(n), gt, pred)
        except (DimMismatch, ClassOutOfRange) as exc:
            raise type(exc)(f"scene {scene.id}: {exc}") from exc

    per_scene = parallel_map(score_scene, manifest.scenes, jobs)

    cm = ConfusionMatrix.zeros(n)
    missing: list[str] = []
    scene_mious: list[float] = []
    evaluated = 0
    for scene, scene_cm in zip(manifest.scenes, per_scene):
        if scene_cm is None:
            missing.append(scene.id)
            continue
        evaluated += 1
        cm = merge(cm, scene_cm)
        try:
            scene_mious.append(miou(scene_cm))
        except NoValidPixels:
            pass

    per_class = tuple(zip(manifest.classes, iou_per_class(cm)))
    return EvalReport(
        per_class_iou=per_class,
        miou=miou(cm),
        pixel_accuracy=pixel_accuracy(cm),
        pixels_evaluated=cm.total,
        scenes_evaluated=evaluated,
        missing=tuple(missing),
        per_scene_miou_mean=(sum(scene_mious) / len(scene_mious)) if scene_mious else None,
    )
