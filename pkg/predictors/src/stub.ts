/**
 * Reference predictor: answers framed image requests on stdin with framed
 * probability maps on stdout, in three behaviors.
 *
 *   uniform                 every class gets probability 1/C
 *   constant --class k      one-hot at class k everywhere
 *   noisy-oracle --gt --p   one-hot of the ground truth, each pixel flipped
 *                           to a uniformly random other class with
 *                           probability p (seeded, frame index mixed in)
 *
 * The process serves requests until stdin closes, so it works both spawned
 * per image and kept alive as a stream. Deliberately dependency-free: the
 * whole boundary is readable in this file plus the protocol module.
 *
 * Usage:
 *   stub --mode uniform --classes C
 *   stub --mode constant --classes C --class K
 *   stub --mode noisy-oracle --classes C --gt labels.png [--p P] [--seed S]
 *
 * Exit codes: 0 clean end of input, 1 malformed request or I/O failure,
 * 2 usage error.
 */

import { readFileSync } from "node:fs";

import { decodeGray, GrayImage } from "./png.js";
import {
  FrameReader,
  parseRequestHeader,
  serializeResponse,
  writeAll,
  SFIM_HEADER_SIZE,
} from "./protocol.js";
import { Rng } from "./rng.js";

interface StubOptions {
  mode: "uniform" | "constant" | "noisy-oracle";
  classes: number;
  classIndex: number;
  gtPath: string | null;
  p: number;
  seed: number;
}

function usageError(message: string): never {
  process.stderr.write(`usage error: ${message}\n`);
  process.exit(2);
}

export function parseArgs(argv: string[]): StubOptions {
  const values = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--")) usageError(`unexpected argument ${flag}`);
    if (i + 1 >= argv.length) usageError(`${flag} needs a value`);
    values.set(flag.slice(2), argv[i + 1]);
  }
  const known = new Set(["mode", "classes", "class", "gt", "p", "seed"]);
  for (const key of values.keys()) {
    if (!known.has(key)) usageError(`unknown flag --${key}`);
  }

  const mode = values.get("mode");
  if (mode !== "uniform" && mode !== "constant" && mode !== "noisy-oracle") {
    usageError(`--mode must be uniform, constant, or noisy-oracle, got ${mode}`);
  }
  const classes = Number(values.get("classes"));
  if (!Number.isInteger(classes) || classes < 1) {
    usageError(`--classes must be a positive integer, got ${values.get("classes")}`);
  }
  const classIndex = values.has("class") ? Number(values.get("class")) : 0;
  if (!Number.isInteger(classIndex) || classIndex < 0 || classIndex >= classes) {
    usageError(`--class must be an integer below ${classes}, got ${values.get("class")}`);
  }
  const p = values.has("p") ? Number(values.get("p")) : 0;
  if (!(p >= 0 && p <= 1)) {
    usageError(`--p must be in [0, 1], got ${values.get("p")}`);
  }
  const seed = values.has("seed") ? Number(values.get("seed")) : 0;
  if (!Number.isInteger(seed) || seed < 0) {
    usageError(`--seed must be a non-negative integer, got ${values.get("seed")}`);
  }
  const gtPath = values.get("gt") ?? null;
  if (mode === "noisy-oracle" && gtPath === null) {
    usageError("noisy-oracle mode needs --gt");
  }
  return { mode, classes, classIndex, gtPath, p, seed };
}

/** Nearest-neighbor lookup: center of each target pixel mapped into the source. */
function resizeNearest(src: GrayImage, width: number, height: number): Uint16Array {
  if (src.width === width && src.height === height) return src.pixels;
  const out = new Uint16Array(width * height);
  for (let y = 0; y < height; y++) {
    const sy = Math.min(src.height - 1, Math.floor(((y + 0.5) * src.height) / height));
    for (let x = 0; x < width; x++) {
      const sx = Math.min(src.width - 1, Math.floor(((x + 0.5) * src.width) / width));
      out[y * width + x] = src.pixels[sy * src.width + sx];
    }
  }
  return out;
}

export function respond(
  opts: StubOptions,
  width: number,
  height: number,
  gt: GrayImage | null,
  frameIndex: number,
): Float32Array {
  const { classes } = opts;
  const plane = width * height;
  const data = new Float32Array(classes * plane);

  if (opts.mode === "uniform") {
    data.fill(Math.fround(1 / classes));
    return data;
  }
  if (opts.mode === "constant") {
    data.fill(1, opts.classIndex * plane, (opts.classIndex + 1) * plane);
    return data;
  }

  const labels = resizeNearest(gt!, width, height);
  // Mix the frame index into the seed so a persistent stream does not
  // corrupt every frame identically.
  const rng = new Rng((opts.seed ^ Math.imul(frameIndex, 0x9e3779b1)) >>> 0);
  for (let i = 0; i < plane; i++) {
    let cls = labels[i];
    if (cls >= classes) {
      throw new Error(`ground-truth label ${cls} exceeds ${classes} classes`);
    }
    if (opts.p > 0 && rng.nextFloat() < opts.p) {
      cls = (cls + 1 + rng.nextBounded(classes - 1)) % classes;
    }
    data[cls * plane + i] = 1;
  }
  return data;
}

async function serve(opts: StubOptions): Promise<number> {
  let gt: GrayImage | null = null;
  if (opts.mode === "noisy-oracle") {
    gt = decodeGray(readFileSync(opts.gtPath!));
  }
  const reader = new FrameReader(process.stdin);
  for (let frame = 0; ; frame++) {
    const header = await reader.readExact(SFIM_HEADER_SIZE);
    if (header === null) return 0;
    const { width, height } = parseRequestHeader(header);
    const rgb = await reader.readExact(3 * width * height);
    if (rgb === null) throw new Error("request payload missing");
    const data = respond(opts, width, height, gt, frame);
    await writeAll(process.stdout, serializeResponse({ classes: opts.classes, width, height, data }));
  }
}

const entryPoint = process.argv[1] ?? "";
if (entryPoint.endsWith("stub.js") || entryPoint.endsWith("stub.ts")) {
  serve(parseArgs(process.argv.slice(2)))
    .then((code) => process.exit(code))
    .catch((err: Error) => {
      process.stderr.write(`stub error: ${err.message}\n`);
      process.exit(1);
    });
}
