/**
 * Document and vocabulary encoding: JSONL in, CBW1 binary plus manifest
 * out. Row i of the binary file corresponds to line i of the JSONL input;
 * the manifest fixes that alignment with a checksum over (ids, row hashes)
 * and a whole-file checksum.
 */

import * as fs from "fs";
import { atomicWrite, serialize, sha256 } from "./cbw1";
import { DEFAULT_DIM, DEFAULT_MODEL, encodeText } from "./encoder";
import { PreppedDocument } from "./preprocess";

export interface Manifest {
  model: string;
  dimensionality: number;
  count: number;
  /** sha256 of the CBW1 file bytes, prefixed "sha256:". */
  checksum: string;
  /** sha256 over newline-joined "id sha256(row bytes)" lines. */
  content_checksum: string;
}

export function readJsonl(filePath: string): PreppedDocument[] {
  const docs: PreppedDocument[] = [];
  const lines = fs.readFileSync(filePath, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line === "") continue;
    let obj: PreppedDocument;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${filePath}:${i + 1}: invalid JSON`);
    }
    if (typeof obj.id !== "string") {
      throw new Error(`${filePath}:${i + 1}: missing id`);
    }
    docs.push(obj);
  }
  return docs;
}

export function writeJsonl(filePath: string, docs: PreppedDocument[]): void {
  atomicWrite(filePath, docs.map((d) => JSON.stringify(d)).join("\n") + "\n");
}

function buildManifest(
  model: string,
  dim: number,
  ids: string[],
  rows: Float32Array[],
  fileBytes: Buffer
): Manifest {
  const rowLines = rows.map(
    (row, i) => `${ids[i]} ${sha256(Buffer.from(row.buffer, row.byteOffset, row.byteLength))}`
  );
  return {
    model,
    dimensionality: dim,
    count: rows.length,
    checksum: `sha256:${sha256(fileBytes)}`,
    content_checksum: `sha256:${sha256(rowLines.join("\n"))}`,
  };
}

/**
 * Encode every document's raw text and write the CBW1 file plus manifest.
 * The manifest is written last, so a partial run leaves no manifest.
 */
export function encodeDocuments(
  docs: PreppedDocument[],
  outputPath: string,
  manifestPath: string,
  dim: number = DEFAULT_DIM,
  model: string = DEFAULT_MODEL
): Manifest {
  const rows = docs.map((d) => encodeText(d.text ?? "", dim));
  const bytes = serialize(rows, dim);
  atomicWrite(outputPath, bytes);
  const manifest = buildManifest(model, dim, docs.map((d) => d.id), rows, bytes);
  atomicWrite(manifestPath, JSON.stringify(manifest, null, 2) + "\n");
  return manifest;
}

/**
 * Encode each vocabulary word in isolation; the sidecar vocabulary file
 * lists one word per line, aligned with the binary rows. Vocabulary is the
 * sorted union of all document tokens.
 */
export function encodeVocabulary(
  docs: PreppedDocument[],
  outputPath: string,
  vocabPath: string,
  dim: number = DEFAULT_DIM
): string[] {
  const words = new Set<string>();
  for (const doc of docs) {
    for (const token of doc.tokens ?? []) words.add(token);
  }
  const vocab = Array.from(words).sort();
  const rows = vocab.map((w) => encodeText(w, dim));
  atomicWrite(outputPath, serialize(rows, dim));
  atomicWrite(vocabPath, vocab.join("\n") + (vocab.length ? "\n" : ""));
  return vocab;
}
