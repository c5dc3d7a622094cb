import { PassThrough } from "node:stream";

import { describe, expect, it } from "vitest";

import {
  FrameReader,
  parseRequestHeader,
  parseResponse,
  ProtocolError,
  serializeRequest,
  serializeResponse,
  TruncatedFrame,
} from "../dist/protocol.js";

// The canonical smallest response: one class, one pixel, probability 1.
const PINNED_1X1_RESPONSE = Buffer.from(
  "5346504d" + "0100" + "01000000" + "01000000" + "01000000" + "0000803f",
  "hex",
);

// And the smallest request: one black pixel.
const PINNED_1X1_REQUEST = Buffer.from("5346494d" + "0100" + "01000000" + "01000000" + "000000", "hex");

describe("response frames", () => {
  it("serializes the pinned 1x1x1 frame byte for byte", () => {
    const buf = serializeResponse({ classes: 1, width: 1, height: 1, data: Float32Array.of(1) });
    expect(buf.equals(PINNED_1X1_RESPONSE)).toBe(true);
  });

  it("round-trips random payloads exactly", () => {
    const data = Float32Array.from({ length: 3 * 4 * 5 }, (_, i) => Math.fround(Math.sin(i)));
    const parsed = parseResponse(serializeResponse({ classes: 3, width: 4, height: 5, data }));
    expect(parsed.classes).toBe(3);
    expect(parsed.width).toBe(4);
    expect(parsed.height).toBe(5);
    expect(Array.from(parsed.data)).toEqual(Array.from(data));
  });

  it("rejects payload length mismatches at build time", () => {
    expect(() =>
      serializeResponse({ classes: 2, width: 2, height: 2, data: new Float32Array(7) }),
    ).toThrow(ProtocolError);
  });

  it("rejects a bad magic", () => {
    const bad = Buffer.from(PINNED_1X1_RESPONSE);
    bad.write("JUNK", 0, "ascii");
    expect(() => parseResponse(bad)).toThrow(ProtocolError);
  });

  it("rejects truncation at every cut", () => {
    for (let cut = 0; cut < PINNED_1X1_RESPONSE.length; cut++) {
      expect(() => parseResponse(PINNED_1X1_RESPONSE.subarray(0, cut))).toThrow();
    }
  });

  it("rejects a wrong version", () => {
    const bad = Buffer.from(PINNED_1X1_RESPONSE);
    bad.writeUInt16LE(2, 4);
    expect(() => parseResponse(bad)).toThrow(ProtocolError);
  });
});

describe("request frames", () => {
  it("serializes the pinned 1x1 frame byte for byte", () => {
    const buf = serializeRequest({ width: 1, height: 1, rgb: new Uint8Array(3) });
    expect(buf.equals(PINNED_1X1_REQUEST)).toBe(true);
  });

  it("parses its own header", () => {
    const buf = serializeRequest({ width: 7, height: 3, rgb: new Uint8Array(63) });
    expect(parseRequestHeader(buf.subarray(0, 14))).toEqual({ width: 7, height: 3 });
  });

  it("rejects degenerate dims", () => {
    const buf = serializeRequest({ width: 1, height: 1, rgb: new Uint8Array(3) });
    buf.writeUInt32LE(0, 6);
    expect(() => parseRequestHeader(buf.subarray(0, 14))).toThrow(ProtocolError);
  });
});

describe("FrameReader", () => {
  it("reassembles frames from fragmented chunks", async () => {
    const stream = new PassThrough();
    const reader = new FrameReader(stream);
    const payload = Buffer.from("abcdefghij");
    for (const byte of payload) stream.write(Buffer.from([byte]));
    stream.end();

    expect((await reader.readExact(4))!.toString()).toBe("abcd");
    expect((await reader.readExact(6))!.toString()).toBe("efghij");
    expect(await reader.readExact(5)).toBeNull();
  });

  it("splits one chunk across several reads", async () => {
    const stream = new PassThrough();
    const reader = new FrameReader(stream);
    stream.end(Buffer.from("0123456789"));
    expect((await reader.readExact(3))!.toString()).toBe("012");
    expect((await reader.readExact(3))!.toString()).toBe("345");
    expect((await reader.readExact(4))!.toString()).toBe("6789");
  });

  it("treats EOF inside a frame as an error", async () => {
    const stream = new PassThrough();
    const reader = new FrameReader(stream);
    stream.end(Buffer.from("ab"));
    await expect(reader.readExact(5)).rejects.toThrow(TruncatedFrame);
  });
});
