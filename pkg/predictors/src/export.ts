/**
 * Convert one image's model output into an SFPM probability file.
 *
 * Accepts a .npy array (float32 or float64, C-order, shape C x H x W) or a
 * raw little-endian float32 .bin, both plane-major. With --logits the values
 * are passed through a per-pixel softmax; otherwise they are written as
 * given and the consumer's normalization check applies.
 *
 * Usage:
 *   export-sfpm input.npy output.sfpm --classes C --width W --height H [--logits]
 *
 * Exit codes: 0 written, 1 unreadable input or shape mismatch, 2 usage error.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { serializeResponse } from "./protocol.js";

export class ShapeMismatch extends Error {}

interface ExportOptions {
  input: string;
  output: string;
  classes: number;
  width: number;
  height: number;
  logits: boolean;
}

function usageError(message: string): never {
  process.stderr.write(`usage error: ${message}\n`);
  process.exit(2);
}

function parseArgs(argv: string[]): ExportOptions {
  const positional: string[] = [];
  const values = new Map<string, string>();
  let logits = false;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--logits") {
      logits = true;
    } else if (arg.startsWith("--")) {
      if (i + 1 >= argv.length) usageError(`${arg} needs a value`);
      values.set(arg.slice(2), argv[++i]);
    } else {
      positional.push(arg);
    }
  }
  if (positional.length !== 2) {
    usageError(`expected input and output paths, got ${positional.length} arguments`);
  }
  const dims: Record<string, number> = {};
  for (const key of ["classes", "width", "height"]) {
    const raw = values.get(key);
    const parsed = Number(raw);
    if (!Number.isInteger(parsed) || parsed < 1) {
      usageError(`--${key} must be a positive integer, got ${raw}`);
    }
    dims[key] = parsed;
  }
  return {
    input: positional[0],
    output: positional[1],
    classes: dims.classes,
    width: dims.width,
    height: dims.height,
    logits,
  };
}

/** Parse a .npy buffer into float64 values plus its declared shape. */
export function parseNpy(buf: Buffer): { values: Float64Array; shape: number[] } {
  if (buf.length < 10 || buf.toString("latin1", 0, 6) !== "\x93NUMPY") {
    throw new ShapeMismatch("not a .npy file: bad magic");
  }
  const major = buf[6];
  const headerLen = major === 1 ? buf.readUInt16LE(8) : buf.readUInt32LE(8);
  const headerEnd = (major === 1 ? 10 : 12) + headerLen;
  const header = buf.toString("latin1", major === 1 ? 10 : 12, headerEnd);

  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1];
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1];
  if (!descr || !fortran || shapeText === undefined) {
    throw new ShapeMismatch(`unparseable .npy header: ${header.trim()}`);
  }
  if (fortran === "True") {
    throw new ShapeMismatch("Fortran-ordered arrays are not supported");
  }
  if (descr !== "<f4" && descr !== "<f8") {
    throw new ShapeMismatch(`unsupported dtype ${descr} (need <f4 or <f8)`);
  }
  const shape = shapeText
    .split(",")
    .map((part) => part.trim())
    .filter((part) => part.length > 0)
    .map(Number);

  const count = shape.reduce((a, b) => a * b, 1);
  const itemSize = descr === "<f4" ? 4 : 8;
  if (buf.length !== headerEnd + count * itemSize) {
    throw new ShapeMismatch(
      `payload is ${buf.length - headerEnd} bytes, shape (${shape.join(", ")}) needs ${count * itemSize}`,
    );
  }
  const values = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    values[i] =
      descr === "<f4" ? buf.readFloatLE(headerEnd + 4 * i) : buf.readDoubleLE(headerEnd + 8 * i);
  }
  return { values, shape };
}

export function loadTensor(path: string, classes: number, width: number, height: number): Float64Array {
  const buf = readFileSync(path);
  const count = classes * width * height;
  if (path.endsWith(".npy")) {
    const { values, shape } = parseNpy(buf);
    const declared = [classes, height, width];
    if (shape.length !== 3 || shape.some((dim, i) => dim !== declared[i])) {
      throw new ShapeMismatch(
        `tensor shape (${shape.join(", ")}) does not match declared (C, H, W) = (${declared.join(", ")})`,
      );
    }
    return values;
  }
  if (buf.length !== 4 * count) {
    throw new ShapeMismatch(
      `raw tensor is ${buf.length} bytes, declared dims need ${4 * count}`,
    );
  }
  const values = new Float64Array(count);
  for (let i = 0; i < count; i++) values[i] = buf.readFloatLE(4 * i);
  return values;
}

/** Per-pixel stable softmax over the class axis of plane-major values. */
export function softmaxPlanes(values: Float64Array, classes: number, plane: number): Float32Array {
  const out = new Float32Array(values.length);
  for (let i = 0; i < plane; i++) {
    let peak = -Infinity;
    for (let c = 0; c < classes; c++) {
      peak = Math.max(peak, values[c * plane + i]);
    }
    let total = 0;
    for (let c = 0; c < classes; c++) {
      total += Math.exp(values[c * plane + i] - peak);
    }
    for (let c = 0; c < classes; c++) {
      out[c * plane + i] = Math.fround(Math.exp(values[c * plane + i] - peak) / total);
    }
  }
  return out;
}

export function exportSfpm(opts: ExportOptions): void {
  const { classes, width, height } = opts;
  const plane = width * height;
  const values = loadTensor(opts.input, classes, width, height);
  const data = opts.logits
    ? softmaxPlanes(values, classes, plane)
    : Float32Array.from(values, Math.fround);
  writeFileSync(opts.output, serializeResponse({ classes, width, height, data }));
}

const entryPoint = process.argv[1] ?? "";
if (entryPoint.endsWith("export.js") || entryPoint.endsWith("export.ts")) {
  try {
    exportSfpm(parseArgs(process.argv.slice(2)));
  } catch (err) {
    process.stderr.write(`export error: ${(err as Error).message}\n`);
    process.exit(1);
  }
}
