import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { loadTensor, parseNpy, ShapeMismatch, softmaxPlanes } from "../dist/export.js";
import { parseResponse } from "../dist/protocol.js";
import { Rng } from "../dist/rng.js";

const EXPORT = fileURLToPath(new URL("../dist/export.js", import.meta.url));

function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "export-test-"));
}

function writeNpy(path: string, values: Float32Array, shape: number[]): void {
  let header = `{'descr': '<f4', 'fortran_order': False, 'shape': (${shape.join(", ")},), }`;
  const unpadded = 10 + header.length + 1;
  header = header + " ".repeat((64 - (unpadded % 64)) % 64) + "\n";
  const buf = Buffer.alloc(10 + header.length + 4 * values.length);
  buf.write("\x93NUMPY", 0, "latin1");
  buf[6] = 1;
  buf[7] = 0;
  buf.writeUInt16LE(header.length, 8);
  buf.write(header, 10, "latin1");
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], 10 + header.length + 4 * i);
  }
  writeFileSync(path, buf);
}

function runExport(args: string[]) {
  return spawnSync("node", [EXPORT, ...args], { timeout: 30000 });
}

describe("softmaxPlanes", () => {
  it("drives saturated logits to a one-hot within 1e-6", () => {
    // Margin 40 saturates float32 softmax far below the tolerance.
    const classes = 3;
    const plane = 4;
    const logits = new Float64Array(classes * plane);
    const winners = [2, 0, 1, 2];
    winners.forEach((cls, i) => {
      logits[cls * plane + i] = 40;
    });
    const probs = softmaxPlanes(logits, classes, plane);
    for (let i = 0; i < plane; i++) {
      for (let c = 0; c < classes; c++) {
        const want = c === winners[i] ? 1 : 0;
        expect(Math.abs(probs[c * plane + i] - want)).toBeLessThanOrEqual(1e-6);
      }
    }
  });

  it("always sums to one per pixel", () => {
    const rng = new Rng(5);
    const logits = Float64Array.from({ length: 5 * 24 }, () => rng.nextFloat() * 20 - 10);
    const probs = softmaxPlanes(logits, 5, 24);
    for (let i = 0; i < 24; i++) {
      let sum = 0;
      for (let c = 0; c < 5; c++) sum += probs[c * 24 + i];
      expect(Math.abs(sum - 1)).toBeLessThan(1e-5);
    }
  });
});

describe("tensor loading", () => {
  it("reads .npy and raw .bin to identical values", () => {
    const dir = tempDir();
    const values = Float32Array.from({ length: 2 * 3 * 4 }, (_, i) => Math.fround(i / 7));
    writeNpy(join(dir, "t.npy"), values, [2, 3, 4]);
    const raw = Buffer.alloc(4 * values.length);
    values.forEach((v, i) => raw.writeFloatLE(v, 4 * i));
    writeFileSync(join(dir, "t.bin"), raw);

    const fromNpy = loadTensor(join(dir, "t.npy"), 2, 4, 3);
    const fromBin = loadTensor(join(dir, "t.bin"), 2, 4, 3);
    expect(Array.from(fromNpy)).toEqual(Array.from(fromBin));
  });

  it("rejects an .npy whose shape disagrees with the declared dims", () => {
    const dir = tempDir();
    writeNpy(join(dir, "t.npy"), new Float32Array(24), [2, 3, 4]);
    expect(() => loadTensor(join(dir, "t.npy"), 2, 3, 4)).toThrow(ShapeMismatch);
    expect(() => loadTensor(join(dir, "t.npy"), 4, 4, 3)).toThrow(ShapeMismatch);
  });

  it("rejects a raw file of the wrong size", () => {
    const dir = tempDir();
    writeFileSync(join(dir, "t.bin"), Buffer.alloc(100));
    expect(() => loadTensor(join(dir, "t.bin"), 2, 4, 3)).toThrow(ShapeMismatch);
  });

  it("rejects corrupt .npy headers", () => {
    expect(() => parseNpy(Buffer.from("not numpy at all"))).toThrow(ShapeMismatch);
  });
});

describe("export CLI", () => {
  it("writes a parseable SFPM from logits", () => {
    const dir = tempDir();
    const plane = 6;
    const logits = new Float64Array(3 * plane);
    for (let i = 0; i < plane; i++) logits[(i % 3) * plane + i] = 40;
    writeNpy(join(dir, "logits.npy"), Float32Array.from(logits), [3, 2, 3]);

    const proc = runExport([
      join(dir, "logits.npy"), join(dir, "out.sfpm"),
      "--classes", "3", "--width", "3", "--height", "2", "--logits",
    ]);
    expect(proc.status, proc.stderr.toString()).toBe(0);

    const res = parseResponse(readFileSync(join(dir, "out.sfpm")));
    expect(res.classes).toBe(3);
    expect(res.width).toBe(3);
    expect(res.height).toBe(2);
    for (let i = 0; i < plane; i++) {
      expect(Math.abs(res.data[(i % 3) * plane + i] - 1)).toBeLessThanOrEqual(1e-6);
    }
  });

  it("passes probabilities through untouched without --logits", () => {
    const dir = tempDir();
    const values = Float32Array.of(0.25, 0.5, 0.75, 0.5);
    writeNpy(join(dir, "p.npy"), values, [2, 1, 2]);
    const proc = runExport([
      join(dir, "p.npy"), join(dir, "out.sfpm"),
      "--classes", "2", "--width", "2", "--height", "1",
    ]);
    expect(proc.status, proc.stderr.toString()).toBe(0);
    const res = parseResponse(readFileSync(join(dir, "out.sfpm")));
    expect(Array.from(res.data)).toEqual([0.25, 0.5, 0.75, 0.5]);
  });

  it("exits 1 on a shape mismatch", () => {
    const dir = tempDir();
    writeNpy(join(dir, "t.npy"), new Float32Array(24), [2, 3, 4]);
    const proc = runExport([
      join(dir, "t.npy"), join(dir, "out.sfpm"),
      "--classes", "5", "--width", "4", "--height", "3",
    ]);
    expect(proc.status).toBe(1);
    expect(proc.stderr.toString()).toContain("shape");
  });

  it("exits 2 on missing dims", () => {
    const proc = runExport(["in.npy", "out.sfpm", "--classes", "3"]);
    expect(proc.status).toBe(2);
  });
});
