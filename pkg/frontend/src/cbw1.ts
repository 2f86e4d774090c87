/**
 * The CBW1 binary embedding layout: 4 magic bytes "CBW1", little-endian
 * uint32 dimensionality, little-endian uint64 row count, then rows of
 * float32 values. Writes are atomic (write to a temp file, then rename).
 */

import * as crypto from "crypto";
import * as fs from "fs";
import * as path from "path";

export const MAGIC = "CBW1";
const HEADER_BYTES = 4 + 4 + 8;

export function serialize(rows: Float32Array[], dim: number): Buffer {
  for (const row of rows) {
    if (row.length !== dim) {
      throw new Error(`row has ${row.length} values, expected ${dim}`);
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + rows.length * dim * 4);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(dim, 4);
  buf.writeBigUInt64LE(BigInt(rows.length), 8);
  let offset = HEADER_BYTES;
  for (const row of rows) {
    for (const v of row) {
      buf.writeFloatLE(v, offset);
      offset += 4;
    }
  }
  return buf;
}

export function deserialize(buf: Buffer): { dim: number; rows: Float32Array[] } {
  if (buf.length < HEADER_BYTES) {
    throw new Error("truncated embedding header");
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(buf.toString("ascii", 0, 4))}`);
  }
  const dim = buf.readUInt32LE(4);
  const count = Number(buf.readBigUInt64LE(8));
  if (buf.length !== HEADER_BYTES + count * dim * 4) {
    throw new Error(
      `payload is ${buf.length - HEADER_BYTES} bytes, expected ${count * dim * 4}`
    );
  }
  const rows: Float32Array[] = [];
  for (let r = 0; r < count; r++) {
    const row = new Float32Array(dim);
    for (let d = 0; d < dim; d++) {
      row[d] = buf.readFloatLE(HEADER_BYTES + (r * dim + d) * 4);
    }
    rows.push(row);
  }
  return { dim, rows };
}

/** Write a buffer atomically: temp file in the same directory, then rename. */
export function atomicWrite(filePath: string, data: Buffer | string): void {
  const dir = path.dirname(path.resolve(filePath));
  const tmp = path.join(
    dir,
    `.${path.basename(filePath)}.${process.pid}.${crypto.randomBytes(4).toString("hex")}.tmp`
  );
  fs.writeFileSync(tmp, data);
  try {
    fs.renameSync(tmp, filePath);
  } catch (err) {
    fs.rmSync(tmp, { force: true });
    throw err;
  }
}

export function writeEmbeddings(filePath: string, rows: Float32Array[], dim: number): void {
  atomicWrite(filePath, serialize(rows, dim));
}

export function readEmbeddings(filePath: string): { dim: number; rows: Float32Array[] } {
  return deserialize(fs.readFileSync(filePath));
}

export function sha256(data: Buffer | string): string {
  return crypto.createHash("sha256").update(data).digest("hex");
}
