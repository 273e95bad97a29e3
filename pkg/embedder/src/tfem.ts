/**
 * TFEM binary embedding store, reader and writer.
 *
 * Layout (all integers little-endian):
 *
 *   header:  magic "TFEM" | u32 version (=1) | u32 dimension | u8 pooling
 *   record:  u16 id_len | id utf-8 | dimension * f32 | u32 crc32
 *
 * The CRC of a record covers its id_len bytes, id bytes, and raw vector
 * bytes. Pooling codes: 0=cls, 1=mean, 2=max. The authoritative consumer
 * of this format is the clonefuse Python package; everything here is
 * checked against it byte for byte in the conformance tests.
 */

import { createHash } from "node:crypto";
import { closeSync, existsSync, openSync, readFileSync, writeSync } from "node:fs";

export const MAGIC = "TFEM";
export const VERSION = 1;
export const POOLING_CODES: Record<string, number> = { cls: 0, mean: 1, max: 2 };
export const POOLING_NAMES: Record<number, string> = { 0: "cls", 1: "mean", 2: "max" };

const HEADER_SIZE = 4 + 4 + 4 + 1;

export class StoreFormatError extends Error {}

// zlib-compatible CRC-32 (poly 0xEDB88320), table built once at load.
const CRC_TABLE = new Uint32Array(256);
for (let n = 0; n < 256; n++) {
  let c = n;
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
  }
  CRC_TABLE[n] = c >>> 0;
}

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]!) & 0xff]! ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function encodeRecord(id: string, vector: Float32Array): Uint8Array {
  const idBytes = new TextEncoder().encode(id);
  if (idBytes.length > 0xffff) {
    throw new StoreFormatError(`fragment id too long: ${id.slice(0, 40)}...`);
  }
  const size = 2 + idBytes.length + 4 * vector.length + 4;
  const buf = new Uint8Array(size);
  const view = new DataView(buf.buffer);
  view.setUint16(0, idBytes.length, true);
  buf.set(idBytes, 2);
  let offset = 2 + idBytes.length;
  for (let i = 0; i < vector.length; i++) {
    view.setFloat32(offset, vector[i]!, true);
    offset += 4;
  }
  view.setUint32(offset, crc32(buf.subarray(0, offset)), true);
  return buf;
}

/**
 * Sequential store writer. Append mode reopens an existing store after
 * checking that its header matches and refuses ids already present.
 */
export class TfemWriter {
  readonly dimension: number;
  readonly pooling: string;
  private fd: number;
  private seen: Set<string>;

  constructor(path: string, dimension: number, pooling: string, append = false) {
    if (!(pooling in POOLING_CODES)) {
      throw new StoreFormatError(`unknown pooling ${JSON.stringify(pooling)}`);
    }
    if (!Number.isInteger(dimension) || dimension <= 0) {
      throw new StoreFormatError(`bad dimension ${dimension}`);
    }
    this.dimension = dimension;
    this.pooling = pooling;
    this.seen = new Set();
    if (append && existsSync(path)) {
      const existing = new TfemReader(path);
      if (existing.dimension !== dimension || existing.pooling !== pooling) {
        throw new StoreFormatError(
          `${path}: cannot append, header is (${existing.dimension}, ${existing.pooling}), ` +
            `job wants (${dimension}, ${pooling})`
        );
      }
      for (const id of existing.ids) this.seen.add(id);
      this.fd = openSync(path, "a");
    } else {
      this.fd = openSync(path, "w");
      const header = new Uint8Array(HEADER_SIZE);
      const view = new DataView(header.buffer);
      header.set(new TextEncoder().encode(MAGIC), 0);
      view.setUint32(4, VERSION, true);
      view.setUint32(8, dimension, true);
      view.setUint8(12, POOLING_CODES[pooling]!);
      writeSync(this.fd, header);
    }
  }

  get count(): number {
    return this.seen.size;
  }

  has(id: string): boolean {
    return this.seen.has(id);
  }

  write(id: string, vector: Float32Array): void {
    if (vector.length !== this.dimension) {
      throw new StoreFormatError(
        `${id}: vector has ${vector.length} dims, store wants ${this.dimension}`
      );
    }
    if (this.seen.has(id)) {
      throw new StoreFormatError(`duplicate fragment id ${id}`);
    }
    writeSync(this.fd, encodeRecord(id, vector));
    this.seen.add(id);
  }

  close(): void {
    closeSync(this.fd);
  }
}

/** Whole-file reader; validates every record's CRC on open. */
export class TfemReader {
  readonly dimension: number;
  readonly pooling: string;
  readonly ids: string[];
  private vectors: Map<string, Uint8Array>;

  constructor(path: string) {
    const raw = readFileSync(path);
    const bytes = new Uint8Array(raw.buffer, raw.byteOffset, raw.byteLength);
    if (bytes.length < HEADER_SIZE) {
      throw new StoreFormatError(`${path}: truncated header`);
    }
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    const magic = new TextDecoder().decode(bytes.subarray(0, 4));
    if (magic !== MAGIC) {
      throw new StoreFormatError(`${path}: bad magic ${JSON.stringify(magic)}`);
    }
    const version = view.getUint32(4, true);
    if (version !== VERSION) {
      throw new StoreFormatError(`${path}: unsupported version ${version}`);
    }
    this.dimension = view.getUint32(8, true);
    const poolingCode = view.getUint8(12);
    const pooling = POOLING_NAMES[poolingCode];
    if (pooling === undefined) {
      throw new StoreFormatError(`${path}: unknown pooling code ${poolingCode}`);
    }
    this.pooling = pooling;

    this.vectors = new Map();
    let offset = HEADER_SIZE;
    let record = 0;
    while (offset < bytes.length) {
      if (offset + 2 > bytes.length) {
        throw new StoreFormatError(`${path}: truncated record ${record} at offset ${offset}`);
      }
      const idLen = view.getUint16(offset, true);
      const bodyEnd = offset + 2 + idLen + 4 * this.dimension;
      if (bodyEnd + 4 > bytes.length) {
        throw new StoreFormatError(`${path}: truncated record ${record} at offset ${offset}`);
      }
      const stored = view.getUint32(bodyEnd, true);
      const actual = crc32(bytes.subarray(offset, bodyEnd));
      if (stored !== actual) {
        throw new StoreFormatError(`${path}: CRC mismatch in record ${record} at offset ${offset}`);
      }
      const id = new TextDecoder("utf-8", { fatal: true }).decode(
        bytes.subarray(offset + 2, offset + 2 + idLen)
      );
      // copy so the map does not pin the whole file buffer
      this.vectors.set(id, bytes.slice(offset + 2 + idLen, bodyEnd));
      offset = bodyEnd + 4;
      record++;
    }
    this.ids = [...this.vectors.keys()].sort();
  }

  get count(): number {
    return this.vectors.size;
  }

  has(id: string): boolean {
    return this.vectors.has(id);
  }

  /** Raw little-endian f32 bytes of one vector, exactly as stored. */
  rawVector(id: string): Uint8Array {
    const bytes = this.vectors.get(id);
    if (bytes === undefined) {
      throw new StoreFormatError(`missing fragment id ${id}`);
    }
    return bytes;
  }

  get(id: string): Float32Array {
    const bytes = this.rawVector(id);
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    const out = new Float32Array(this.dimension);
    for (let i = 0; i < this.dimension; i++) {
      out[i] = view.getFloat32(4 * i, true);
    }
    return out;
  }

  /**
   * SHA-256 over (id utf-8, 0x00, raw vector bytes) in sorted id order.
   * Matches EmbeddingStore.content_digest() in the Python package, so two
   * stores agree on this digest iff their vectors are bit-identical.
   */
  contentDigest(): string {
    const h = createHash("sha256");
    for (const id of this.ids) {
      h.update(Buffer.from(id, "utf-8"));
      h.update(Buffer.from([0]));
      h.update(this.vectors.get(id)!);
    }
    return h.digest("hex");
  }
}
