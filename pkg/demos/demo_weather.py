"""
Procedural weather overlays
===========================

Rain streaks, snow, fog, and a lightning flash, rendered onto a synthetic
street scene. Every mark is seeded, so a (seed, intensity) pair always
produces the same pixels; labels are untouched because weather changes
appearance, not geometry.
"""

from pathlib import Path

import numpy as np

from segfusion import ImageRGB, WeatherMarkParams, apply_weather_mark, write_image_png

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

# A gradient "sky" over a dark "road", enough contrast to see the marks.
h, w = 240, 320
sky = np.linspace(180, 120, h // 2, dtype=np.uint8)
scene = np.empty((h, w, 3), dtype=np.uint8)
scene[: h // 2] = sky[:, None, None]
scene[h // 2 :] = (70, 72, 80)
image = ImageRGB(scene)
write_image_png(image, out_dir / "weather_clear.png")

# One call per condition. Intensity 0 is a no-op; 1 is the heaviest form.
for kind in ("rain", "snow", "fog", "lightning"):
    params = WeatherMarkParams(kind=kind, intensity=0.7, seed=42)
    marked = apply_weather_mark(image, params)
    write_image_png(marked, out_dir / f"weather_{kind}.png")
    changed = (marked.data != image.data).any(axis=2).mean()
    print(f"{kind:10s} changed {changed:6.1%} of pixels")

# Determinism check: the same seed renders the same storm.
again = apply_weather_mark(image, WeatherMarkParams(kind="rain", intensity=0.7, seed=42))
reference = apply_weather_mark(image, WeatherMarkParams(kind="rain", intensity=0.7, seed=42))
print("same seed, same pixels:", bool((again.data == reference.data).all()))
print(f"wrote PNGs to {out_dir}")
