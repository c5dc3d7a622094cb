"""End-to-end tests for the command-line interface.

Every command runs as a real subprocess (``python3 -m segfusion``) so exit
codes, stderr formatting, and file outputs are exercised exactly as a shell
user sees them. Expected outputs come from the library API run in-process.
"""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from segfusion import (
    ImageRGB,
    LabelMap,
    ProbMap,
    VoteConfig,
    majority_vote,
    one_hot_prob,
    parse_manifest,
    read_label_png,
    read_sfpm,
    soft_average,
    write_image_png,
    write_label_png,
    write_manifest,
    write_sfpm,
)
from segfusion.metrics import evaluate_manifest

PY = sys.executable


def run_cli(*args: str, cwd=None) -> subprocess.CompletedProcess:
    return subprocess.run(
        [PY, "-m", "segfusion", *map(str, args)],
        capture_output=True, text=True, cwd=cwd, timeout=120,
    )


def assert_error_line(proc: subprocess.CompletedProcess, kind: str) -> None:
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1, proc.stderr
    assert lines[0].startswith(f"error: {kind}: "), proc.stderr


def rand_labels(rng, shape, num_classes) -> LabelMap:
    return LabelMap(rng.integers(0, num_classes, size=shape, dtype=np.int64))


def rand_prob(rng, num_classes, shape) -> ProbMap:
    raw = rng.random((num_classes, *shape)).astype(np.float32)
    return ProbMap(raw / raw.sum(axis=0, keepdims=True))


class TestVote:
    def test_matches_library_and_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(7)
        maps = [rand_labels(rng, (9, 13), 4) for _ in range(3)]
        paths = []
        for i, m in enumerate(maps):
            p = tmp_path / f"in{i}.png"
            write_label_png(m, p)
            paths.append(p)
        out1, out2 = tmp_path / "a.png", tmp_path / "b.png"

        for out in (out1, out2):
            proc = run_cli("vote", *paths, "-o", out)
            assert proc.returncode == 0, proc.stderr
        assert out1.read_bytes() == out2.read_bytes()

        expected = majority_vote(maps, VoteConfig())
        np.testing.assert_array_equal(read_label_png(out1).data, expected.data)

    def test_accepts_sfpm_inputs(self, tmp_path):
        rng = np.random.default_rng(11)
        prob = rand_prob(rng, 3, (6, 8))
        labels = rand_labels(rng, (6, 8), 3)
        write_sfpm(prob, tmp_path / "a.sfpm")
        write_label_png(labels, tmp_path / "b.png")
        write_label_png(labels, tmp_path / "c.png")

        proc = run_cli(
            "vote", tmp_path / "a.sfpm", tmp_path / "b.png", tmp_path / "c.png",
            "-o", tmp_path / "out.png",
        )
        assert proc.returncode == 0, proc.stderr
        # Two identical label inputs always outvote the probability input.
        np.testing.assert_array_equal(read_label_png(tmp_path / "out.png").data, labels.data)

    def test_priority_flag_breaks_ties(self, tmp_path):
        a = LabelMap(np.zeros((4, 4), dtype=np.int64))
        b = LabelMap(np.ones((4, 4), dtype=np.int64))
        write_label_png(a, tmp_path / "a.png")
        write_label_png(b, tmp_path / "b.png")

        proc = run_cli(
            "vote", tmp_path / "a.png", tmp_path / "b.png",
            "--priority", "1,0", "-o", tmp_path / "out.png",
        )
        assert proc.returncode == 0, proc.stderr
        assert (read_label_png(tmp_path / "out.png").data == 1).all()

    def test_bad_priority_string_is_usage_error(self, tmp_path):
        write_label_png(LabelMap(np.zeros((2, 2), dtype=np.int64)), tmp_path / "a.png")
        proc = run_cli("vote", tmp_path / "a.png", "--priority", "x,y", "-o", tmp_path / "o.png")
        assert proc.returncode == 2

    def test_shape_mismatch_is_data_error(self, tmp_path):
        write_label_png(LabelMap(np.zeros((2, 2), dtype=np.int64)), tmp_path / "a.png")
        write_label_png(LabelMap(np.zeros((3, 3), dtype=np.int64)), tmp_path / "b.png")
        proc = run_cli("vote", tmp_path / "a.png", tmp_path / "b.png", "-o", tmp_path / "o.png")
        assert proc.returncode == 3
        assert_error_line(proc, "DimMismatch")


class TestAvg:
    def test_matches_library_with_weights(self, tmp_path):
        rng = np.random.default_rng(3)
        maps = [rand_prob(rng, 5, (7, 7)) for _ in range(3)]
        for i, m in enumerate(maps):
            write_sfpm(m, tmp_path / f"in{i}.sfpm")
        proc = run_cli(
            "avg", *(tmp_path / f"in{i}.sfpm" for i in range(3)),
            "--weights", "0.5,0.25,0.25", "-o", tmp_path / "out.sfpm",
        )
        assert proc.returncode == 0, proc.stderr
        expected = soft_average(maps, (0.5, 0.25, 0.25))
        np.testing.assert_array_equal(read_sfpm(tmp_path / "out.sfpm").data, expected.data)

    def test_weight_count_mismatch_is_data_error(self, tmp_path):
        rng = np.random.default_rng(4)
        write_sfpm(rand_prob(rng, 2, (3, 3)), tmp_path / "a.sfpm")
        proc = run_cli("avg", tmp_path / "a.sfpm", "--weights", "0.5,0.5", "-o", tmp_path / "o.sfpm")
        assert proc.returncode == 3
        assert_error_line(proc, "InvalidParams")

    def test_missing_file_is_data_error(self, tmp_path):
        proc = run_cli("avg", tmp_path / "absent.sfpm", "-o", tmp_path / "o.sfpm")
        assert proc.returncode == 3
        assert_error_line(proc, "IoFailure")


class TestConvert:
    def test_label_round_trip_is_identity(self, tmp_path):
        rng = np.random.default_rng(9)
        labels = rand_labels(rng, (10, 6), 7)
        write_label_png(labels, tmp_path / "in.png")

        assert run_cli(
            "convert", tmp_path / "in.png", tmp_path / "mid.sfpm", "--classes", "7"
        ).returncode == 0
        assert run_cli("convert", tmp_path / "mid.sfpm", tmp_path / "back.png").returncode == 0

        np.testing.assert_array_equal(read_label_png(tmp_path / "back.png").data, labels.data)
        expected = one_hot_prob(labels, 7)
        np.testing.assert_array_equal(read_sfpm(tmp_path / "mid.sfpm").data, expected.data)

    def test_png_to_sfpm_without_classes_is_usage_error(self, tmp_path):
        write_label_png(LabelMap(np.zeros((2, 2), dtype=np.int64)), tmp_path / "in.png")
        proc = run_cli("convert", tmp_path / "in.png", tmp_path / "out.sfpm")
        assert proc.returncode == 2

    def test_unsupported_suffix_pair_is_usage_error(self, tmp_path):
        proc = run_cli("convert", tmp_path / "a.txt", tmp_path / "b.png")
        assert proc.returncode == 2

    def test_corrupt_sfpm_is_data_error(self, tmp_path):
        (tmp_path / "bad.sfpm").write_bytes(b"not a prob map")
        proc = run_cli("convert", tmp_path / "bad.sfpm", tmp_path / "out.png")
        assert proc.returncode == 3
        assert_error_line(proc, "BadMagic")


def build_dataset(root, rng, num_scenes=3, shape=(12, 16), num_classes=3):
    """Dataset on disk plus perfect predictions for every scene."""
    (root / "images").mkdir()
    (root / "gt").mkdir()
    (root / "pred").mkdir()
    entries = []
    for i in range(num_scenes):
        sid = f"scene_{i:03d}"
        gt = rand_labels(rng, shape, num_classes)
        img = ImageRGB(rng.integers(0, 256, size=(*shape, 3), dtype=np.uint8))
        write_image_png(img, root / "images" / f"{sid}.png")
        write_label_png(gt, root / "gt" / f"{sid}.png")
        write_label_png(gt, root / "pred" / f"{sid}.png")
        entries.append({"id": sid, "image": f"images/{sid}.png", "gt": f"gt/{sid}.png"})
    write_manifest(root / "manifest.json", [f"c{k}" for k in range(num_classes)], 255, entries)
    return root / "manifest.json"


class TestEval:
    def test_json_report_matches_library(self, tmp_path):
        rng = np.random.default_rng(21)
        manifest_path = build_dataset(tmp_path, rng)
        # Perturb one prediction so the score is not trivially 1.0.
        noisy = rand_labels(rng, (12, 16), 3)
        write_label_png(noisy, tmp_path / "pred" / "scene_001.png")

        proc = run_cli("eval", manifest_path, tmp_path / "pred", "--json")
        assert proc.returncode == 0, proc.stderr
        got = json.loads(proc.stdout)

        expected = evaluate_manifest(parse_manifest(manifest_path), tmp_path / "pred")
        assert got == expected.to_json_dict()
        assert 0.0 < got["miou"] < 1.0

    def test_text_report_prints_miou(self, tmp_path):
        rng = np.random.default_rng(22)
        manifest_path = build_dataset(tmp_path, rng)
        proc = run_cli("eval", manifest_path, tmp_path / "pred")
        assert proc.returncode == 0, proc.stderr
        assert "miou" in proc.stdout
        assert "pixel_accuracy" in proc.stdout

    def test_jobs_do_not_change_the_report(self, tmp_path):
        rng = np.random.default_rng(23)
        manifest_path = build_dataset(tmp_path, rng, num_scenes=5)
        outs = []
        for jobs in (1, 4):
            proc = run_cli("eval", manifest_path, tmp_path / "pred", "--json", "--jobs", jobs)
            assert proc.returncode == 0, proc.stderr
            outs.append(proc.stdout)
        assert outs[0] == outs[1]

    def test_strict_missing_prediction_is_data_error(self, tmp_path):
        rng = np.random.default_rng(24)
        manifest_path = build_dataset(tmp_path, rng)
        (tmp_path / "pred" / "scene_000.png").unlink()
        proc = run_cli("eval", manifest_path, tmp_path / "pred", "--strict")
        assert proc.returncode == 3
        assert_error_line(proc, "MissingPrediction")

    def test_missing_manifest_is_data_error(self, tmp_path):
        proc = run_cli("eval", tmp_path / "absent.json", tmp_path)
        assert proc.returncode == 3
        assert_error_line(proc, "IoFailure")


def stub_args(mode: str, classes: int, **extra: object) -> str:
    parts = [PY, "-m", "segfusion.stub", "--mode", mode, "--classes", str(classes)]
    for key, value in extra.items():
        parts.extend([f"--{key.replace('_', '-')}", str(value)])
    return " ".join(parts)


def write_registry(path, entries) -> None:
    path.write_text(json.dumps({"format": 1, "predictors": entries}))


class TestPredictorCommands:
    def test_tta_uniform_stub_through_registry(self, tmp_path):
        img = ImageRGB(np.full((8, 10, 3), 90, dtype=np.uint8))
        write_image_png(img, tmp_path / "in.png")
        write_registry(tmp_path / "reg.json", [
            {"id": "uniform", "command": stub_args("uniform", 4).split(), "expected_classes": 4},
        ])

        proc = run_cli(
            "tta", tmp_path / "in.png", "-o", tmp_path / "out.sfpm",
            "--registry", tmp_path / "reg.json", "--predictor", "uniform",
            "--scales", "0.5,1.0", "--flip",
        )
        assert proc.returncode == 0, proc.stderr
        got = read_sfpm(tmp_path / "out.sfpm")
        assert got.data.shape == (4, 8, 10)
        np.testing.assert_allclose(got.data, 0.25, atol=1e-6)

    def test_tile_constant_stub_with_adhoc_command(self, tmp_path):
        img = ImageRGB(np.zeros((10, 14, 3), dtype=np.uint8))
        write_image_png(img, tmp_path / "in.png")

        proc = run_cli(
            "tile", tmp_path / "in.png", "-o", tmp_path / "out.sfpm",
            "--command", stub_args("constant", 3, class_index=2),
            "--classes", "3", "--window", "6x6",
        )
        assert proc.returncode == 0, proc.stderr
        got = read_sfpm(tmp_path / "out.sfpm")
        assert got.data.shape == (3, 10, 14)
        np.testing.assert_array_equal(got.data.argmax(axis=0), 2)

    def test_unknown_registry_id_is_data_error(self, tmp_path):
        write_image_png(ImageRGB(np.zeros((4, 4, 3), dtype=np.uint8)), tmp_path / "in.png")
        write_registry(tmp_path / "reg.json", [
            {"id": "uniform", "command": stub_args("uniform", 2).split(), "expected_classes": 2},
        ])
        proc = run_cli(
            "tta", tmp_path / "in.png", "-o", tmp_path / "o.sfpm",
            "--registry", tmp_path / "reg.json", "--predictor", "nope",
        )
        assert proc.returncode == 3
        assert_error_line(proc, "InvalidParams")
        assert "uniform" in proc.stderr

    def test_crashing_predictor_is_exit_4(self, tmp_path):
        write_image_png(ImageRGB(np.zeros((4, 4, 3), dtype=np.uint8)), tmp_path / "in.png")
        proc = run_cli(
            "tta", tmp_path / "in.png", "-o", tmp_path / "o.sfpm",
            "--command", "sh -c 'exit 3'", "--classes", "2", "--scales", "1.0",
        )
        assert proc.returncode == 4
        assert_error_line(proc, "PredictorCrash")

    def test_no_predictor_choice_is_usage_error(self, tmp_path):
        write_image_png(ImageRGB(np.zeros((4, 4, 3), dtype=np.uint8)), tmp_path / "in.png")
        proc = run_cli("tta", tmp_path / "in.png", "-o", tmp_path / "o.sfpm")
        assert proc.returncode == 2

    def test_stride_without_window_is_usage_error(self, tmp_path):
        write_image_png(ImageRGB(np.zeros((4, 4, 3), dtype=np.uint8)), tmp_path / "in.png")
        proc = run_cli(
            "tta", tmp_path / "in.png", "-o", tmp_path / "o.sfpm",
            "--command", stub_args("uniform", 2), "--classes", "2", "--stride", "2x2",
        )
        assert proc.returncode == 2


class TestAugmentCommand:
    def make_recipe(self, path):
        path.write_text(json.dumps({
            "format": 1,
            "seed": 99,
            "ops": [
                {"op": "weather", "kind": "rain", "intensity": 0.5},
                {"op": "geometric", "spec": {"op": "hflip"}},
            ],
        }))

    def test_runs_are_byte_identical_and_manifest_valid(self, tmp_path):
        rng = np.random.default_rng(31)
        manifest_path = build_dataset(tmp_path, rng)
        self.make_recipe(tmp_path / "recipe.json")

        for name in ("out_a", "out_b"):
            proc = run_cli("augment", manifest_path, tmp_path / "recipe.json", tmp_path / name)
            assert proc.returncode == 0, proc.stderr

        scenes = parse_manifest(tmp_path / "out_a" / "manifest.json")
        assert len(scenes.scenes) == 3
        for scene in scenes.scenes:
            assert scene.image.exists() and scene.gt.exists()
            a = scene.image.read_bytes()
            b = (tmp_path / "out_b" / "images" / f"{scene.id}.png").read_bytes()
            assert a == b

    def test_output_differs_from_input(self, tmp_path):
        rng = np.random.default_rng(32)
        manifest_path = build_dataset(tmp_path, rng, num_scenes=1)
        self.make_recipe(tmp_path / "recipe.json")
        proc = run_cli("augment", manifest_path, tmp_path / "recipe.json", tmp_path / "out")
        assert proc.returncode == 0, proc.stderr
        before = read_label_png(tmp_path / "gt" / "scene_000.png").data
        after = read_label_png(tmp_path / "out" / "gt" / "scene_000.png").data
        np.testing.assert_array_equal(after, before[:, ::-1])

    def test_bad_recipe_is_data_error(self, tmp_path):
        rng = np.random.default_rng(33)
        manifest_path = build_dataset(tmp_path, rng, num_scenes=1)
        (tmp_path / "recipe.json").write_text('{"format": 2, "seed": 1, "ops": []}')
        proc = run_cli("augment", manifest_path, tmp_path / "recipe.json", tmp_path / "out")
        assert proc.returncode == 3
        assert_error_line(proc, "SchemaError")


class TestPipeline:
    def build(self, tmp_path, rng):
        manifest_path = build_dataset(tmp_path, rng, num_scenes=4, shape=(9, 11))
        write_registry(tmp_path / "reg.json", [
            {"id": "c1", "command": stub_args("constant", 3, class_index=1).split(), "expected_classes": 3},
            {"id": "c2", "command": stub_args("constant", 3, class_index=2).split(), "expected_classes": 3},
        ])
        (tmp_path / "pipe.json").write_text(json.dumps({
            "format": 1,
            "registry": "reg.json",
            "manifest": "manifest.json",
            "output": "fused",
            "priority": ["c2", "c1"],
            "sources": [
                {"predictor": "c1", "scales": [1.0]},
                {"predictor": "c2", "scales": [0.5, 1.0], "flip": True},
            ],
        }))
        return tmp_path / "pipe.json"

    def test_priority_decides_the_tie(self, tmp_path):
        config = self.build(tmp_path, np.random.default_rng(41))
        proc = run_cli("pipeline", config)
        assert proc.returncode == 0, proc.stderr
        for i in range(4):
            labels = read_label_png(tmp_path / "fused" / f"scene_{i:03d}.png")
            assert (labels.data == 2).all()

    def test_jobs_variants_are_byte_identical(self, tmp_path):
        config = self.build(tmp_path, np.random.default_rng(42))
        results = []
        for jobs in (1, 3):
            proc = run_cli("pipeline", config, "--jobs", jobs)
            assert proc.returncode == 0, proc.stderr
            results.append([
                (tmp_path / "fused" / f"scene_{i:03d}.png").read_bytes() for i in range(4)
            ])
        assert results[0] == results[1]

    def test_unknown_source_predictor_is_data_error(self, tmp_path):
        config = self.build(tmp_path, np.random.default_rng(43))
        doc = json.loads(config.read_text())
        doc["sources"][0]["predictor"] = "ghost"
        del doc["priority"]
        config.write_text(json.dumps(doc))
        proc = run_cli("pipeline", config)
        assert proc.returncode == 3
        assert_error_line(proc, "SchemaError")


class TestTopLevel:
    def test_version_flag(self):
        proc = run_cli("--version")
        assert proc.returncode == 0
        assert "segfusion" in proc.stdout

    def test_unknown_command_is_usage_error(self):
        proc = run_cli("frobnicate")
        assert proc.returncode == 2
