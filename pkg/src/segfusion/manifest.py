"""Dataset manifests: class names, ignore sentinel, and scene entries.

A manifest is a hand-editable JSON document:

    {
      "format": 1,
      "classes": ["sky", "tree", ...],
      "ignore_index": 255,
      "scenes": [
        {"id": "scene_001", "image": "images/scene_001.png",
         "gt": "labels/scene_001.png", "weather": "rain"},
        ...
      ]
    }

Relative image and ground-truth paths are resolved against the manifest's
directory. Scene ids must be unique; the optional weather tag is one of
rain, snow, fog, clear, lightning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateSceneId, IoFailure, SchemaError

MANIFEST_FORMAT = 1
WEATHER_TAGS = ("rain", "snow", "fog", "clear", "lightning")


@dataclass(frozen=True)
class Scene:
    id: str
    image: Path
    gt: Path
    weather: str | None = None


@dataclass(frozen=True)
class SceneManifest:
    classes: tuple[str, ...]
    ignore_index: int
    scenes: tuple[Scene, ...]

    @property
    def num_classes(self) -> int:
        return len(self.classes)


def _require(doc: dict, key: str, kind: type, where: str):
    if key not in doc:
        raise SchemaError(f"{where}.{key}: missing")
    value = doc[key]
    if kind is int and isinstance(value, bool):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}, got bool")
    if not isinstance(value, kind):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_manifest(path: str | Path) -> SceneManifest:
    """Load and validate a manifest file; errors carry the offending field path."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: manifest must be a JSON object")

    fmt = _require(doc, "format", int, "manifest")
    if fmt != MANIFEST_FORMAT:
        raise SchemaError(f"manifest.format: unsupported version {fmt}")
    classes = _require(doc, "classes", list, "manifest")
    if not classes:
        raise SchemaError("manifest.classes: must be non-empty")
    for i, name in enumerate(classes):
        if not isinstance(name, str) or not name:
            raise SchemaError(f"manifest.classes[{i}]: expected non-empty string")
    ignore_index = _require(doc, "ignore_index", int, "manifest")
    if ignore_index != 255 and ignore_index < len(classes):
        raise SchemaError(
            f"manifest.ignore_index: {ignore_index} collides with class indices "
            f"(must be >= {len(classes)} or == 255)"
        )
    raw_scenes = _require(doc, "scenes", list, "manifest")

    base = path.parent
    scenes: list[Scene] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw_scenes):
        where = f"manifest.scenes[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where}: expected object")
        sid = _require(entry, "id", str, where)
        if not sid:
            raise SchemaError(f"{where}.id: must be non-empty")
        if sid in seen:
            raise DuplicateSceneId(f"{where}.id: duplicate scene id {sid!r}")
        seen.add(sid)
        image = base / _require(entry, "image", str, where)
        gt = base / _require(entry, "gt", str, where)
        weather = entry.get("weather")
        if weather is not None and weather not in WEATHER_TAGS:
            raise SchemaError(f"{where}.weather: {weather!r} not in {list(WEATHER_TAGS)}")
        scenes.append(Scene(id=sid, image=image, gt=gt, weather=weather))

    return SceneManifest(tuple(classes), ignore_index, tuple(scenes))


def write_manifest(
    path: str | Path,
    classes: tuple[str, ...] | list[str],
    ignore_index: int,
    scenes: list[dict],
) -> None:
    """Write a manifest; scene paths are taken verbatim (keep them relative)."""
    doc = {
        "format": MANIFEST_FORMAT,
        "classes": list(classes),
        "ignore_index": ignore_index,
        "scenes": scenes,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
