/**
 * Minimal PNG codec: exactly the rasters the toolkit exchanges.
 *
 * Encodes grayscale 8-bit, grayscale 16-bit, and RGB 8-bit images with
 * filter 0 scanlines. Decodes any non-interlaced grayscale or RGB PNG with
 * 8- or 16-bit samples, including all five scanline filters, because other
 * writers choose filters adaptively. Compression is delegated to node:zlib.
 */

import { deflateSync, inflateSync } from "node:zlib";

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

const CRC_TABLE = new Uint32Array(256);
for (let n = 0; n < 256; n++) {
  let c = n;
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
  }
  CRC_TABLE[n] = c >>> 0;
}

function crc32(buf: Buffer): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, body: Buffer): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(body.length, 0);
  head.write(type, 4, "ascii");
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(Buffer.concat([head.subarray(4), body])), 0);
  return Buffer.concat([head, body, crc]);
}

export class PngError extends Error {}

export interface GrayImage {
  width: number;
  height: number;
  /** Row-major samples; values must fit the declared bit depth. */
  pixels: Uint16Array;
  bitDepth: 8 | 16;
}

export interface RgbImage {
  width: number;
  height: number;
  /** 3*W*H interleaved RGB bytes, row-major. */
  rgb: Uint8Array;
}

function assemble(width: number, height: number, bitDepth: number, colorType: number, raw: Buffer): Buffer {
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = bitDepth;
  ihdr[9] = colorType;
  return Buffer.concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", deflateSync(raw)),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

export function encodeGray(image: GrayImage): Buffer {
  const { width, height, pixels, bitDepth } = image;
  if (pixels.length !== width * height) {
    throw new PngError(`pixel count ${pixels.length} does not match ${width}x${height}`);
  }
  const bytesPerSample = bitDepth / 8;
  const raw = Buffer.alloc(height * (1 + width * bytesPerSample));
  let at = 0;
  for (let y = 0; y < height; y++) {
    raw[at++] = 0; // filter type: none
    for (let x = 0; x < width; x++) {
      const v = pixels[y * width + x];
      if (bitDepth === 8) {
        if (v > 255) throw new PngError(`value ${v} does not fit 8 bits`);
        raw[at++] = v;
      } else {
        raw.writeUInt16BE(v, at);
        at += 2;
      }
    }
  }
  return assemble(width, height, bitDepth, 0, raw);
}

export function encodeRgb(image: RgbImage): Buffer {
  const { width, height, rgb } = image;
  if (rgb.length !== 3 * width * height) {
    throw new PngError(`rgb length ${rgb.length} does not match ${width}x${height}`);
  }
  const raw = Buffer.alloc(height * (1 + 3 * width));
  let at = 0;
  for (let y = 0; y < height; y++) {
    raw[at++] = 0;
    raw.set(rgb.subarray(3 * width * y, 3 * width * (y + 1)), at);
    at += 3 * width;
  }
  return assemble(width, height, 8, 2, raw);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

interface Decoded {
  width: number;
  height: number;
  bitDepth: number;
  colorType: number;
  /** Unfiltered scanline bytes, width * channels * bytesPerSample per row. */
  samples: Buffer;
}

function decodeChunks(buf: Buffer): Decoded {
  if (buf.length < 8 || !buf.subarray(0, 8).equals(SIGNATURE)) {
    throw new PngError("not a PNG: bad signature");
  }
  let at = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  const idat: Buffer[] = [];
  while (at + 8 <= buf.length) {
    const length = buf.readUInt32BE(at);
    const type = buf.toString("ascii", at + 4, at + 8);
    const body = buf.subarray(at + 8, at + 8 + length);
    if (body.length < length) throw new PngError(`truncated ${type} chunk`);
    if (type === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      bitDepth = body[8];
      colorType = body[9];
      if (body[12] !== 0) throw new PngError("interlaced PNGs are not supported");
    } else if (type === "IDAT") {
      idat.push(body);
    } else if (type === "IEND") {
      break;
    }
    at += 12 + length;
  }
  if (width === 0 || height === 0) throw new PngError("missing IHDR");
  if (colorType !== 0 && colorType !== 2) {
    throw new PngError(`unsupported color type ${colorType} (grayscale and RGB only)`);
  }
  if (bitDepth !== 8 && bitDepth !== 16) {
    throw new PngError(`unsupported bit depth ${bitDepth}`);
  }

  const channels = colorType === 0 ? 1 : 3;
  const bpp = channels * (bitDepth / 8);
  const rowBytes = width * bpp;
  const raw = inflateSync(Buffer.concat(idat));
  if (raw.length !== height * (1 + rowBytes)) {
    throw new PngError(`decompressed to ${raw.length} bytes, expected ${height * (1 + rowBytes)}`);
  }

  const samples = Buffer.alloc(height * rowBytes);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (1 + rowBytes)];
    const line = raw.subarray(y * (1 + rowBytes) + 1, (y + 1) * (1 + rowBytes));
    const out = samples.subarray(y * rowBytes, (y + 1) * rowBytes);
    const prev = y > 0 ? samples.subarray((y - 1) * rowBytes, y * rowBytes) : null;
    for (let i = 0; i < rowBytes; i++) {
      const left = i >= bpp ? out[i - bpp] : 0;
      const up = prev ? prev[i] : 0;
      const upLeft = prev && i >= bpp ? prev[i - bpp] : 0;
      let v = line[i];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += up; break;
        case 3: v += (left + up) >> 1; break;
        case 4: v += paeth(left, up, upLeft); break;
        default: throw new PngError(`unknown scanline filter ${filter}`);
      }
      out[i] = v & 0xff;
    }
  }
  return { width, height, bitDepth, colorType, samples };
}

export function decodeGray(buf: Buffer): GrayImage {
  const { width, height, bitDepth, colorType, samples } = decodeChunks(buf);
  if (colorType !== 0) throw new PngError("expected a grayscale PNG");
  const pixels = new Uint16Array(width * height);
  if (bitDepth === 8) {
    for (let i = 0; i < pixels.length; i++) pixels[i] = samples[i];
  } else {
    for (let i = 0; i < pixels.length; i++) pixels[i] = samples.readUInt16BE(2 * i);
  }
  return { width, height, pixels, bitDepth: bitDepth as 8 | 16 };
}

export function decodeRgb(buf: Buffer): RgbImage {
  const { width, height, bitDepth, colorType, samples } = decodeChunks(buf);
  if (colorType !== 2 || bitDepth !== 8) throw new PngError("expected an 8-bit RGB PNG");
  return { width, height, rgb: new Uint8Array(samples) };
}
