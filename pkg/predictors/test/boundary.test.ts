/**
 * Cross-language boundary: these tests drive the Python toolkit's CLI with
 * the Node predictors plugged in over the wire protocol, touching nothing
 * but public interfaces (CLI flags, PNG and SFPM files, manifest JSON).
 */

import { spawnSync } from "node:child_process";
import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { encodeGray, encodeRgb } from "../dist/png.js";
import { parseResponse, SFPM_HEADER_SIZE } from "../dist/protocol.js";
import { Rng } from "../dist/rng.js";

const STUB = fileURLToPath(new URL("../dist/stub.js", import.meta.url));
const EXPORT = fileURLToPath(new URL("../dist/export.js", import.meta.url));
const TIMEOUT = 120_000;

function runPrimary(args: string[]) {
  const proc = spawnSync("python3", ["-m", "segfusion", ...args], {
    timeout: TIMEOUT,
    encoding: "utf8",
  });
  expect(proc.status, proc.stderr).toBe(0);
  return proc;
}

function writeScene(dir: string, id: string, labels: number[], width: number, height: number): void {
  const rng = new Rng(id.length * 7919);
  const rgb = Uint8Array.from({ length: 3 * width * height }, () => rng.nextBounded(256));
  writeFileSync(join(dir, "images", `${id}.png`), encodeRgb({ width, height, rgb }));
  writeFileSync(
    join(dir, "gt", `${id}.png`),
    encodeGray({ width, height, pixels: Uint16Array.from(labels), bitDepth: 8 }),
  );
}

function stubCommand(mode: string, classes: number, extra: string[] = []): string {
  return ["node", STUB, "--mode", mode, "--classes", String(classes), ...extra].join(" ");
}

describe("stub responses pass the toolkit's validation", () => {
  const cases: Array<[string, string[]]> = [
    ["uniform", []],
    ["constant", ["--class", "1"]],
  ];

  for (const [mode, extra] of cases) {
    it(`${mode} mode survives a tta round trip`, { timeout: TIMEOUT }, () => {
      const dir = mkdtempSync(join(tmpdir(), "boundary-"));
      mkdirSync(join(dir, "images"));
      mkdirSync(join(dir, "gt"));
      writeScene(dir, "s", new Array(8 * 6).fill(0), 8, 6);

      runPrimary([
        "tta", join(dir, "images", "s.png"), "-o", join(dir, "out.sfpm"),
        "--command", stubCommand(mode, 4, extra), "--classes", "4", "--scales", "1.0",
      ]);
      const res = parseResponse(readFileSync(join(dir, "out.sfpm")));
      expect(res.classes).toBe(4);
      expect(res.width).toBe(8);
      expect(res.height).toBe(6);
    });
  }

  it("uniform probabilities survive aggregation bit-exactly", { timeout: TIMEOUT }, () => {
    const dir = mkdtempSync(join(tmpdir(), "boundary-"));
    mkdirSync(join(dir, "images"));
    mkdirSync(join(dir, "gt"));
    writeScene(dir, "s", new Array(4 * 4).fill(0), 4, 4);

    // Native scale, no flip: the toolkit promises a bit-exact pass-through,
    // so every value is exactly 0.25.
    runPrimary([
      "tta", join(dir, "images", "s.png"), "-o", join(dir, "out.sfpm"),
      "--command", stubCommand("uniform", 4), "--classes", "4", "--scales", "1.0",
    ]);
    const res = parseResponse(readFileSync(join(dir, "out.sfpm")));
    expect(Array.from(res.data).every((v) => v === 0.25)).toBe(true);
  });

  it("noisy-oracle mode survives multi-scale flipped aggregation", { timeout: TIMEOUT }, () => {
    const dir = mkdtempSync(join(tmpdir(), "boundary-"));
    mkdirSync(join(dir, "images"));
    mkdirSync(join(dir, "gt"));
    const labels = Array.from({ length: 10 * 8 }, (_, i) => i % 3);
    writeScene(dir, "s", labels, 10, 8);

    runPrimary([
      "tta", join(dir, "images", "s.png"), "-o", join(dir, "out.sfpm"),
      "--command",
      stubCommand("noisy-oracle", 3, ["--gt", join(dir, "gt", "s.png"), "--p", "0.2", "--seed", "4"]),
      "--classes", "3", "--scales", "0.5,1.0", "--flip",
    ]);
    const res = parseResponse(readFileSync(join(dir, "out.sfpm")));
    expect(res.classes).toBe(3);
    // Four averaged one-hot variants: sums stay exactly representable.
    const plane = 10 * 8;
    for (let i = 0; i < plane; i++) {
      const sum = res.data[i] + res.data[plane + i] + res.data[2 * plane + i];
      expect(Math.abs(sum - 1)).toBeLessThan(1e-6);
    }
  });
});

describe("perfect oracle scores a perfect mIoU", () => {
  it("tta at native scale then eval gives exactly 1.0", { timeout: TIMEOUT }, () => {
    const dir = mkdtempSync(join(tmpdir(), "boundary-"));
    for (const sub of ["images", "gt", "pred"]) mkdirSync(join(dir, sub));

    const rng = new Rng(123);
    const sceneIds = ["alpha", "beta"];
    for (const id of sceneIds) {
      const labels = Array.from({ length: 12 * 9 }, () => rng.nextBounded(3));
      writeScene(dir, id, labels, 12, 9);
    }
    writeFileSync(join(dir, "manifest.json"), JSON.stringify({
      format: 1,
      classes: ["road", "sky", "tree"],
      ignore_index: 255,
      scenes: sceneIds.map((id) => ({ id, image: `images/${id}.png`, gt: `gt/${id}.png` })),
    }));

    for (const id of sceneIds) {
      runPrimary([
        "tta", join(dir, "images", `${id}.png`), "-o", join(dir, `${id}.sfpm`),
        "--command",
        stubCommand("noisy-oracle", 3, ["--gt", join(dir, "gt", `${id}.png`), "--p", "0"]),
        "--classes", "3", "--scales", "1.0",
      ]);
      runPrimary(["convert", join(dir, `${id}.sfpm`), join(dir, "pred", `${id}.png`)]);
    }

    const evalProc = runPrimary(["eval", join(dir, "manifest.json"), join(dir, "pred"), "--json"]);
    const report = JSON.parse(evalProc.stdout);
    expect(report.miou).toBe(1.0);
    expect(report.pixel_accuracy).toBe(1.0);
    expect(report.scenes).toBe(2);
  });
});

describe("exporter output is readable by the toolkit", () => {
  it("round-trips bit-exactly through a single-input average", { timeout: TIMEOUT }, () => {
    const dir = mkdtempSync(join(tmpdir(), "boundary-"));
    const classes = 3;
    const plane = 5 * 4;
    const raw = Buffer.alloc(4 * classes * plane);
    const rng = new Rng(77);
    for (let i = 0; i < plane; i++) {
      const winner = rng.nextBounded(classes);
      for (let c = 0; c < classes; c++) {
        raw.writeFloatLE(c === winner ? 30 : 0, 4 * (c * plane + i));
      }
    }
    writeFileSync(join(dir, "logits.bin"), raw);

    const exp = spawnSync("node", [
      EXPORT, join(dir, "logits.bin"), join(dir, "exported.sfpm"),
      "--classes", "3", "--width", "5", "--height", "4", "--logits",
    ], { timeout: TIMEOUT });
    expect(exp.status, exp.stderr.toString()).toBe(0);

    // A single-input average is contractually bit-exact, so the toolkit
    // reading and rewriting the file must preserve every payload byte.
    runPrimary(["avg", join(dir, "exported.sfpm"), "-o", join(dir, "echo.sfpm")]);
    const sent = readFileSync(join(dir, "exported.sfpm"));
    const back = readFileSync(join(dir, "echo.sfpm"));
    expect(back.equals(sent)).toBe(true);

    const res = parseResponse(sent);
    for (let i = 0; i < plane; i++) {
      let sum = 0;
      for (let c = 0; c < classes; c++) sum += res.data[c * plane + i];
      expect(Math.abs(sum - 1)).toBeLessThan(1e-5);
    }
    expect(sent.length).toBe(SFPM_HEADER_SIZE + 4 * classes * plane);
  });
});
