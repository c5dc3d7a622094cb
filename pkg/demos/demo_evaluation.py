"""
Scoring predictions against a manifest
======================================

A dataset is a JSON manifest naming scenes, images, and ground-truth masks.
This demo materializes a tiny one, fakes predictions of varying quality,
and prints the aggregate report the `eval` CLI command would give.
"""

import tempfile
from pathlib import Path

import numpy as np

from segfusion import ImageRGB, LabelMap, parse_manifest, write_image_png, write_label_png, write_manifest
from segfusion.metrics import evaluate_manifest
from segfusion.stub import corrupt_labels

rng = np.random.default_rng(3)
root = Path(tempfile.mkdtemp(prefix="segfusion_demo_"))
for sub in ("images", "gt", "pred"):
    (root / sub).mkdir()

# Five scenes over three classes; predictions degrade scene by scene.
classes = ["road", "sky", "tree"]
entries = []
for i in range(5):
    sid = f"scene_{i}"
    gt = LabelMap(rng.integers(0, 3, size=(64, 96), dtype=np.int64))
    img = ImageRGB(rng.integers(0, 256, size=(64, 96, 3), dtype=np.uint8))
    pred = corrupt_labels(gt, p=0.1 * i, num_classes=3, seed=i)

    write_image_png(img, root / "images" / f"{sid}.png")
    write_label_png(gt, root / "gt" / f"{sid}.png")
    write_label_png(pred, root / "pred" / f"{sid}.png")
    entries.append({"id": sid, "image": f"images/{sid}.png", "gt": f"gt/{sid}.png"})

write_manifest(root / "manifest.json", classes, 255, entries)

# The report pools one confusion matrix over all scenes (so big scenes
# weigh more) and also averages the per-scene mIoU for comparison.
report = evaluate_manifest(parse_manifest(root / "manifest.json"), root / "pred")
print(report.to_text())

# The same numbers are available as JSON for scripting.
print("miou from the JSON view:", round(report.to_json_dict()["miou"], 4))
