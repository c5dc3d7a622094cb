"""Command-line surface over the fusion, metrics, augmentation, and bridge APIs.

Every command is a pure pipeline over files: identical inputs, flags, and
seeds give byte-identical outputs, whatever ``--jobs`` says. Failures print a
single machine-parsable line ``error: <Kind>: <message>`` on stderr and exit
2 for usage problems, 3 for data problems, and 4 for predictor problems.
"""

from __future__ import annotations

import functools
import json
import shlex
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from ._parallel import parallel_map
from .augment import apply_recipe, parse_recipe
from .bridge import PredictorHandle, PredictorSpec, parse_registry
from .core import argmax_labels, one_hot_prob
from .ensemble import VoteConfig, majority_vote, priority_from_ids, soft_average
from .errors import DataError, InvalidParams, PredictorError, SchemaError
from .formats import (
    read_image_png,
    read_label_png,
    read_sfpm,
    write_image_png,
    write_label_png,
    write_sfpm,
)
from .fusion import TtaConfig, WindowParams, tta_aggregate
from .manifest import parse_manifest, write_manifest
from .metrics import evaluate_manifest


def _fail(exc: Exception, code: int) -> None:
    message = " ".join(str(exc).split())
    click.echo(f"error: {type(exc).__name__}: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map library errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PredictorError as exc:
            _fail(exc, 4)
        except DataError as exc:
            _fail(exc, 3)

    return wrapper


def _parse_dims(value: str, flag: str) -> tuple[int, int]:
    parts = value.lower().split("x")
    try:
        w, h = (int(p) for p in parts)
    except ValueError:
        raise click.BadParameter(f"{flag} takes WIDTHxHEIGHT, got {value!r}")
    return w, h


def _parse_floats(value: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in value.split(","))
    except ValueError:
        raise click.BadParameter(f"{flag} takes comma-separated numbers, got {value!r}")


def _window_params(window: str | None, stride: str | None) -> WindowParams | None:
    if window is None:
        if stride is not None:
            raise click.UsageError("--stride needs --window")
        return None
    ww, wh = _parse_dims(window, "--window")
    if stride is None:
        sx, sy = ww, wh
    else:
        sx, sy = _parse_dims(stride, "--stride")
    return WindowParams(ww, wh, sx, sy)


def _load_vote_input(path: Path, ignore_index: int):
    if path.suffix == ".sfpm":
        return argmax_labels(read_sfpm(path), ignore_index=ignore_index)
    return read_label_png(path, ignore_index=ignore_index)


predictor_options = [
    click.option("--registry", type=click.Path(), help="predictor registry JSON"),
    click.option("--predictor", help="predictor id inside the registry"),
    click.option("--command", help="ad-hoc predictor command line (per-image mode)"),
    click.option("--classes", type=int, help="class count for --command predictors"),
    click.option("--timeout", type=float, help="per-invocation timeout override, seconds"),
]


def with_predictor(fn):
    for option in reversed(predictor_options):
        fn = option(fn)
    return fn


def _resolve_predictor(registry, predictor, command, classes, timeout) -> PredictorSpec:
    if registry is not None:
        if predictor is None:
            raise click.UsageError("--registry needs --predictor to pick an entry")
        specs = parse_registry(registry)
        for spec in specs:
            if spec.id == predictor:
                if timeout is not None:
                    spec = PredictorSpec(
                        id=spec.id, command=spec.command,
                        expected_classes=spec.expected_classes, io_mode=spec.io_mode,
                        parallel_safe=spec.parallel_safe, timeout=timeout,
                    )
                return spec
        raise InvalidParams(
            f"predictor {predictor!r} is not in {registry} "
            f"(available: {', '.join(s.id for s in specs)})"
        )
    if command is not None:
        if classes is None:
            raise click.UsageError("--command needs --classes")
        return PredictorSpec(
            id="cli", command=tuple(shlex.split(command)),
            expected_classes=classes, timeout=timeout,
        )
    raise click.UsageError("pick a predictor: --registry/--predictor or --command/--classes")


@click.group()
@click.version_option(__version__, prog_name="segfusion")
def main() -> None:
    """Model-agnostic post-processing for semantic segmentation."""


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="label PNG to write")
@click.option("--priority", help="comma-separated input positions, highest rank first")
@click.option("--abstain-ignore", is_flag=True, help="ignore-labeled pixels abstain from voting")
@click.option("--ignore-index", default=255, show_default=True)
@guarded
def vote(inputs, output, priority, abstain_ignore, ignore_index) -> None:
    """Majority-vote K label maps (PNG or SFPM) into one label PNG."""
    maps = [_load_vote_input(Path(p), ignore_index) for p in inputs]
    rank = None
    if priority is not None:
        try:
            rank = tuple(int(p) for p in priority.split(","))
        except ValueError:
            raise click.BadParameter(f"--priority takes comma-separated positions, got {priority!r}")
    cfg = VoteConfig(priority=rank, treat_ignore_as_abstain=abstain_ignore)
    write_label_png(majority_vote(maps, cfg), output)


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="SFPM to write")
@click.option("--weights", help="comma-separated per-input weights (default equal)")
@guarded
def avg(inputs, output, weights) -> None:
    """Average K probability maps into one SFPM."""
    maps = [read_sfpm(p) for p in inputs]
    parsed = _parse_floats(weights, "--weights") if weights is not None else None
    if parsed is not None and len(parsed) != len(maps):
        raise InvalidParams(f"{len(parsed)} weights for {len(maps)} inputs")
    write_sfpm(soft_average(maps, parsed), output)


@main.command()
@click.argument("image", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="SFPM to write")
@click.option("--window", required=True, help="window dims, WIDTHxHEIGHT")
@click.option("--stride", help="stride, WIDTHxHEIGHT (default: the window)")
@click.option("--jobs", default=1, show_default=True)
@with_predictor
@guarded
def tile(image, output, window, stride, jobs, **predictor_flags) -> None:
    """Sliding-window prediction over one image, fused back to full size."""
    spec = _resolve_predictor(**predictor_flags)
    img = read_image_png(image)
    cfg = TtaConfig(scales=(1.0,), window=_window_params(window, stride))
    with PredictorHandle(spec) as handle:
        write_sfpm(tta_aggregate(img, cfg, handle.predict, jobs=jobs), output)


@main.command()
@click.argument("image", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="SFPM to write")
@click.option("--scales", help="comma-separated scale factors (default full sweep)")
@click.option("--flip", is_flag=True, help="add a mirrored pass per scale")
@click.option("--window", help="window dims for per-scale tiling, WIDTHxHEIGHT")
@click.option("--stride", help="stride for per-scale tiling, WIDTHxHEIGHT")
@click.option("--jobs", default=1, show_default=True)
@with_predictor
@guarded
def tta(image, output, scales, flip, window, stride, jobs, **predictor_flags) -> None:
    """Multi-scale, optionally mirrored prediction, averaged into one SFPM."""
    spec = _resolve_predictor(**predictor_flags)
    img = read_image_png(image)
    kwargs = {"horizontal_flip": flip, "window": _window_params(window, stride)}
    if scales is not None:
        kwargs["scales"] = _parse_floats(scales, "--scales")
    cfg = TtaConfig(**kwargs)
    with PredictorHandle(spec) as handle:
        write_sfpm(tta_aggregate(img, cfg, handle.predict, jobs=jobs), output)


@main.command("eval")
@click.argument("manifest", type=click.Path())
@click.argument("pred_dir", type=click.Path())
@click.option("--strict", is_flag=True, help="fail on the first scene without a prediction")
@click.option("--json", "as_json", is_flag=True, help="print the report as JSON")
@click.option("--jobs", default=1, show_default=True)
@guarded
def eval_cmd(manifest, pred_dir, strict, as_json, jobs) -> None:
    """Score a directory of predictions against a dataset manifest."""
    report = evaluate_manifest(parse_manifest(manifest), pred_dir, strict=strict, jobs=jobs)
    if as_json:
        click.echo(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    else:
        click.echo(report.to_text(), nl=False)


@main.command()
@click.argument("manifest", type=click.Path())
@click.argument("recipe", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--jobs", default=1, show_default=True)
@guarded
def augment(manifest, recipe, out_dir, jobs) -> None:
    """Materialize an augmented copy of a dataset described by a manifest."""
    scenes = parse_manifest(manifest)
    plan = parse_recipe(recipe)
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)

    def transform(scene):
        img = read_image_png(scene.image)
        labels = read_label_png(scene.gt)
        img, labels = apply_recipe(img, labels, plan, scene.id)
        write_image_png(img, out / "images" / f"{scene.id}.png")
        write_label_png(labels, out / "gt" / f"{scene.id}.png")
        entry = {"id": scene.id, "image": f"images/{scene.id}.png", "gt": f"gt/{scene.id}.png"}
        if scene.weather is not None:
            entry["weather"] = scene.weather
        return entry

    entries = parallel_map(transform, scenes.scenes, jobs)
    write_manifest(out / "manifest.json", list(scenes.classes), scenes.ignore_index, entries)
    click.echo(f"augmented {len(entries)} scenes into {out}")


@main.command()
@click.argument("source", type=click.Path())
@click.argument("target", type=click.Path())
@click.option("--classes", type=int, help="class count when expanding labels to SFPM")
@click.option("--ignore-index", default=255, show_default=True)
@guarded
def convert(source, target, classes, ignore_index) -> None:
    """Convert SFPM to label PNG (argmax) or label PNG to SFPM (one-hot)."""
    src, dst = Path(source), Path(target)
    if src.suffix == ".sfpm" and dst.suffix == ".png":
        write_label_png(argmax_labels(read_sfpm(src), ignore_index=ignore_index), dst)
    elif src.suffix == ".png" and dst.suffix == ".sfpm":
        if classes is None:
            raise click.UsageError("label to SFPM conversion needs --classes")
        labels = read_label_png(src, ignore_index=ignore_index)
        write_sfpm(one_hot_prob(labels, classes), dst)
    else:
        raise click.UsageError("convert maps .sfpm to .png or .png to .sfpm")


def _pipeline_config(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"pipeline config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != 1:
        raise SchemaError("pipeline.format must be 1")
    for key in ("registry", "manifest", "output", "sources"):
        if key not in doc:
            raise SchemaError(f"pipeline.{key} is required")
    if not isinstance(doc["sources"], list) or not doc["sources"]:
        raise SchemaError("pipeline.sources must be a non-empty list")
    return doc


@main.command()
@click.argument("config", type=click.Path())
@click.option("--jobs", default=1, show_default=True)
@guarded
def pipeline(config, jobs) -> None:
    """Vote-over-TTA across several predictors, driven by one config file.

    Per scene, every source runs test-time aggregation, its map collapses to
    labels, and the label maps are majority-voted (optionally under an
    explicit priority order) into the final prediction PNG.
    """
    path = Path(config)
    doc = _pipeline_config(path)
    base = path.parent
    registry = {s.id: s for s in parse_registry(base / doc["registry"])}
    scenes = parse_manifest(base / doc["manifest"])
    out = base / doc["output"]
    out.mkdir(parents=True, exist_ok=True)
    ignore_index = doc.get("ignore_index", 255)

    sources = []
    for i, entry in enumerate(doc["sources"]):
        where = f"pipeline.sources[{i}]"
        if not isinstance(entry, dict) or "predictor" not in entry:
            raise SchemaError(f"{where}.predictor is required")
        if entry["predictor"] not in registry:
            raise SchemaError(f"{where}: no predictor {entry['predictor']!r} in the registry")
        window = entry.get("window")
        stride = entry.get("stride")
        cfg_kwargs = {
            "horizontal_flip": bool(entry.get("flip", False)),
            "window": _window_params(window, stride),
        }
        if "scales" in entry:
            cfg_kwargs["scales"] = tuple(entry["scales"])
        sources.append((registry[entry["predictor"]], TtaConfig(**cfg_kwargs)))

    rank = None
    if "priority" in doc:
        rank = priority_from_ids(
            [spec.id for spec, _ in sources], doc["priority"]
        )
    vote_cfg = VoteConfig(priority=rank, treat_ignore_as_abstain=bool(doc.get("abstain_ignore", False)))

    handles = [PredictorHandle(spec) for spec, _ in sources]
    try:
        def run_scene(scene):
            img = read_image_png(scene.image)
            votes = [
                argmax_labels(
                    tta_aggregate(img, cfg, handle.predict), ignore_index=ignore_index
                )
                for handle, (_, cfg) in zip(handles, sources)
            ]
            write_label_png(majority_vote(votes, vote_cfg), out / f"{scene.id}.png")
            return scene.id

        done = parallel_map(run_scene, scenes.scenes, jobs)
    finally:
        for handle in handles:
            handle.close()
    click.echo(f"wrote {len(done)} predictions to {out}")


if __name__ == "__main__":
    main()
