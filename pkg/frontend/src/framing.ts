/**
 * Frame codec for the upm wire protocol.
 *
 * Layout (little-endian):
 *   "UPM1" | version=1 (1B) | kind (1B) | job id (8B) |
 *   device id len (2B) + bytes | payload len (4B) + bytes | crc32 (4B)
 *
 * The CRC-32 (zip/zlib polynomial) covers everything after the magic.
 */

export enum FrameKind {
  HELLO = 1,
  REQUEST = 2,
  RESPONSE = 3,
  ERROR = 4,
  CONTROL = 5,
  BYE = 6,
}

export interface Frame {
  kind: FrameKind;
  jobId: number;
  deviceId: string;
  payload: Buffer;
}

export class ProtocolFault extends Error {
  constructor(readonly detail: string) {
    super(`PROTOCOL_ERROR: ${detail}`);
  }
}

const MAGIC = Buffer.from("UPM1", "ascii");
const VERSION = 1;

const CRC_TABLE = new Uint32Array(256);
for (let n = 0; n < 256; n++) {
  let c = n;
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
  }
  CRC_TABLE[n] = c >>> 0;
}

export function crc32(data: Buffer): number {
  let crc = 0xffffffff;
  for (const byte of data) {
    crc = CRC_TABLE[(crc ^ byte) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

export function encodeFrame(frame: Frame): Buffer {
  const device = Buffer.from(frame.deviceId, "utf-8");
  if (device.length > 0xffff) throw new ProtocolFault("device id too long");
  const body = Buffer.alloc(1 + 1 + 8 + 2 + device.length + 4 + frame.payload.length);
  let off = 0;
  off = body.writeUInt8(VERSION, off);
  off = body.writeUInt8(frame.kind, off);
  off = Number(body.writeBigUInt64LE(BigInt(frame.jobId), off));
  off = body.writeUInt16LE(device.length, off);
  off += device.copy(body, off);
  off = body.writeUInt32LE(frame.payload.length, off);
  frame.payload.copy(body, off);
  const trailer = Buffer.alloc(4);
  trailer.writeUInt32LE(crc32(body), 0);
  return Buffer.concat([MAGIC, body, trailer]);
}

/** Decode the first complete frame; returns null if more bytes are needed. */
export function decodeFrame(data: Buffer): { frame: Frame; used: number } | null {
  if (data.length >= 4 && !data.subarray(0, 4).equals(MAGIC)) {
    throw new ProtocolFault("magic");
  }
  if (data.length < 16) return null;
  const deviceLen = data.readUInt16LE(14);
  const payloadOff = 16 + deviceLen;
  if (data.length < payloadOff + 4) return null;
  const payloadLen = data.readUInt32LE(payloadOff);
  const end = payloadOff + 4 + payloadLen + 4;
  if (data.length < end) return null;
  const body = data.subarray(4, end - 4);
  if (crc32(body) !== data.readUInt32LE(end - 4)) throw new ProtocolFault("crc");
  if (data.readUInt8(4) !== VERSION) throw new ProtocolFault("version");
  const kind = data.readUInt8(5);
  if (!(kind in FrameKind)) throw new ProtocolFault("kind");
  const jobId = data.readBigUInt64LE(6);
  if (jobId > BigInt(Number.MAX_SAFE_INTEGER)) throw new ProtocolFault("job id");
  return {
    frame: {
      kind: kind as FrameKind,
      jobId: Number(jobId),
      deviceId: data.subarray(16, payloadOff).toString("utf-8"),
      payload: Buffer.from(data.subarray(payloadOff + 4, payloadOff + 4 + payloadLen)),
    },
    used: end,
  };
}

/** Accumulates stream chunks and yields whole frames. */
export class FrameDecoder {
  private buffer = Buffer.alloc(0);

  push(chunk: Buffer): Frame[] {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, chunk]) : chunk;
    const frames: Frame[] = [];
    for (;;) {
      const result = decodeFrame(this.buffer);
      if (result === null) return frames;
      frames.push(result.frame);
      this.buffer = this.buffer.subarray(result.used);
    }
  }

  get pendingBytes(): number {
    return this.buffer.length;
  }
}
