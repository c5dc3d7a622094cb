/**
 * Framed wire protocol between the toolkit and external predictors.
 *
 * Request frame ("SFIM"):
 *   magic 4 bytes, version u16 LE = 1, width u32 LE, height u32 LE,
 *   then 3*W*H interleaved RGB bytes, row-major.
 *
 * Response frame ("SFPM"):
 *   magic 4 bytes, version u16 LE = 1, classes u32 LE, width u32 LE,
 *   height u32 LE, then C*W*H little-endian float32, plane-major with
 *   row-major planes.
 *
 * Both frames carry explicit dimensions, so a reader always knows how many
 * bytes to consume and no delimiters are needed.
 */

export const SFIM_MAGIC = "SFIM";
export const SFPM_MAGIC = "SFPM";
export const PROTOCOL_VERSION = 1;
export const SFIM_HEADER_SIZE = 14;
export const SFPM_HEADER_SIZE = 18;

export class ProtocolError extends Error {}
export class TruncatedFrame extends ProtocolError {}

export interface RequestFrame {
  width: number;
  height: number;
  /** 3*W*H interleaved RGB bytes, row-major. */
  rgb: Uint8Array;
}

export interface ResponseFrame {
  classes: number;
  width: number;
  height: number;
  /** C*W*H probabilities, plane-major. */
  data: Float32Array;
}

export function serializeRequest(frame: RequestFrame): Buffer {
  const expected = 3 * frame.width * frame.height;
  if (frame.rgb.length !== expected) {
    throw new ProtocolError(`rgb payload is ${frame.rgb.length} bytes, dims promise ${expected}`);
  }
  const buf = Buffer.alloc(SFIM_HEADER_SIZE + expected);
  buf.write(SFIM_MAGIC, 0, "ascii");
  buf.writeUInt16LE(PROTOCOL_VERSION, 4);
  buf.writeUInt32LE(frame.width, 6);
  buf.writeUInt32LE(frame.height, 10);
  buf.set(frame.rgb, SFIM_HEADER_SIZE);
  return buf;
}

export function parseRequestHeader(header: Buffer): { width: number; height: number } {
  if (header.length < SFIM_HEADER_SIZE) {
    throw new TruncatedFrame(`request header is ${header.length} bytes, need ${SFIM_HEADER_SIZE}`);
  }
  if (header.toString("ascii", 0, 4) !== SFIM_MAGIC) {
    throw new ProtocolError(`bad request magic ${JSON.stringify(header.toString("latin1", 0, 4))}`);
  }
  const version = header.readUInt16LE(4);
  if (version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported request version ${version}`);
  }
  const width = header.readUInt32LE(6);
  const height = header.readUInt32LE(10);
  if (width < 1 || height < 1) {
    throw new ProtocolError(`degenerate request dims ${width}x${height}`);
  }
  return { width, height };
}

export function serializeResponse(frame: ResponseFrame): Buffer {
  const expected = frame.classes * frame.width * frame.height;
  if (frame.data.length !== expected) {
    throw new ProtocolError(`payload has ${frame.data.length} values, dims promise ${expected}`);
  }
  const buf = Buffer.alloc(SFPM_HEADER_SIZE + 4 * expected);
  buf.write(SFPM_MAGIC, 0, "ascii");
  buf.writeUInt16LE(PROTOCOL_VERSION, 4);
  buf.writeUInt32LE(frame.classes, 6);
  buf.writeUInt32LE(frame.width, 10);
  buf.writeUInt32LE(frame.height, 14);
  for (let i = 0; i < frame.data.length; i++) {
    buf.writeFloatLE(frame.data[i], SFPM_HEADER_SIZE + 4 * i);
  }
  return buf;
}

export function parseResponse(buf: Buffer): ResponseFrame {
  if (buf.length < SFPM_HEADER_SIZE) {
    throw new TruncatedFrame(`response is ${buf.length} bytes, need a ${SFPM_HEADER_SIZE}-byte header`);
  }
  if (buf.toString("ascii", 0, 4) !== SFPM_MAGIC) {
    throw new ProtocolError(`bad response magic ${JSON.stringify(buf.toString("latin1", 0, 4))}`);
  }
  const version = buf.readUInt16LE(4);
  if (version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported response version ${version}`);
  }
  const classes = buf.readUInt32LE(6);
  const width = buf.readUInt32LE(10);
  const height = buf.readUInt32LE(14);
  if (classes < 1 || width < 1 || height < 1) {
    throw new ProtocolError(`degenerate response dims C=${classes} ${width}x${height}`);
  }
  const count = classes * width * height;
  if (buf.length !== SFPM_HEADER_SIZE + 4 * count) {
    throw new TruncatedFrame(
      `response is ${buf.length} bytes, header promises ${SFPM_HEADER_SIZE + 4 * count}`,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(SFPM_HEADER_SIZE + 4 * i);
  }
  return { classes, width, height, data };
}

/**
 * Incremental byte reader over a stream, preserving frame boundaries across
 * reads. readExact resolves with exactly n bytes, or null on a clean EOF at
 * a boundary; EOF mid-frame rejects, because the peer hung up inside one.
 */
export class FrameReader {
  private pending: Buffer = Buffer.alloc(0);
  private ended = false;
  private failure: Error | null = null;
  private wake: (() => void) | null = null;

  constructor(stream: NodeJS.ReadableStream) {
    stream.on("data", (chunk: Buffer) => {
      this.pending = this.pending.length ? Buffer.concat([this.pending, chunk]) : chunk;
      this.notify();
    });
    stream.on("end", () => {
      this.ended = true;
      this.notify();
    });
    stream.on("error", (err: Error) => {
      this.failure = err;
      this.notify();
    });
    stream.resume?.();
  }

  private notify(): void {
    const wake = this.wake;
    this.wake = null;
    wake?.();
  }

  async readExact(n: number): Promise<Buffer | null> {
    for (;;) {
      if (this.failure) throw this.failure;
      if (this.pending.length >= n) {
        const head = this.pending.subarray(0, n);
        this.pending = this.pending.subarray(n);
        return head;
      }
      if (this.ended) {
        if (this.pending.length === 0) return null;
        throw new TruncatedFrame(`stream ended after ${this.pending.length} of ${n} bytes`);
      }
      await new Promise<void>((resolve) => {
        this.wake = resolve;
      });
    }
  }
}

export function writeAll(stream: NodeJS.WritableStream, buf: Buffer): Promise<void> {
  return new Promise((resolve, reject) => {
    stream.write(buf, (err) => (err ? reject(err) : resolve()));
  });
}
