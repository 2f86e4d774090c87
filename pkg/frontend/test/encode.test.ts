import * as crypto from "crypto";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterEach, beforeEach, describe, expect, it } from "vitest";
import { readEmbeddings } from "../src/cbw1";
import { encodeText } from "../src/encoder";
import { encodeDocuments, encodeVocabulary, readJsonl, writeJsonl } from "../src/encode";
import { preprocess } from "../src/preprocess";

let dir: string;
beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "encode-"));
});
afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

const RAW = [
  { id: "d1", text: "The CPU runs at 3GHz!" },
  { id: "d2", text: "The CPU runs at 3GHz!!" },
  { id: "d3", text: "Bananas ripen quickly outdoors" },
];

describe("encoder", () => {
  it("is deterministic", () => {
    const a = encodeText("some sentence", 32);
    const b = encodeText("some sentence", 32);
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it("emits unit-norm vectors", () => {
    const v = encodeText("normalized output", 64);
    const norm = Math.sqrt(v.reduce((s, x) => s + x * x, 0));
    expect(norm).toBeCloseTo(1.0, 5);
  });

  it("ranks near-duplicates above unrelated sentences", () => {
    const cos = (u: Float32Array, v: Float32Array) =>
      u.reduce((s, x, i) => s + x * v[i], 0);
    const a = encodeText(RAW[0].text);
    const b = encodeText(RAW[1].text);
    const c = encodeText(RAW[2].text);
    expect(cos(a, b)).toBeGreaterThan(cos(a, c));
  });
});

describe("encodeDocuments", () => {
  it("writes aligned rows with a validating manifest", () => {
    const docs = preprocess(RAW);
    const out = path.join(dir, "emb.cbw");
    const manifestPath = path.join(dir, "emb.manifest.json");
    const manifest = encodeDocuments(docs, out, manifestPath, 48);

    const { dim, rows } = readEmbeddings(out);
    expect(dim).toBe(48);
    expect(rows.length).toBe(3);
    expect(manifest.count).toBe(3);
    expect(manifest.dimensionality).toBe(48);

    // whole-file checksum validates
    const fileHash = crypto.createHash("sha256").update(fs.readFileSync(out)).digest("hex");
    expect(manifest.checksum).toBe(`sha256:${fileHash}`);

    // row i equals the encoder output for document i, bit-exactly
    for (let i = 0; i < docs.length; i++) {
      expect(Array.from(rows[i])).toEqual(Array.from(encodeText(docs[i].text, 48)));
    }

    // content checksum covers (ids, row hashes) in order
    const lines = rows.map((row, i) => {
      const bytes = Buffer.from(row.buffer, row.byteOffset, row.byteLength);
      return `${docs[i].id} ${crypto.createHash("sha256").update(bytes).digest("hex")}`;
    });
    const contentHash = crypto.createHash("sha256").update(lines.join("\n")).digest("hex");
    expect(manifest.content_checksum).toBe(`sha256:${contentHash}`);
  });

  it("round-trips documents through JSONL", () => {
    const docs = preprocess(RAW);
    const file = path.join(dir, "docs.jsonl");
    writeJsonl(file, docs);
    expect(readJsonl(file)).toEqual(docs);
  });
});

describe("encodeVocabulary", () => {
  it("row-aligns the binary with its sidecar vocabulary", () => {
    const docs = preprocess(RAW);
    const out = path.join(dir, "vocab.cbw");
    const vocabPath = path.join(dir, "vocab.txt");
    const vocab = encodeVocabulary(docs, out, vocabPath, 48);

    expect(vocab).toEqual([...vocab].sort());
    expect(vocab).toContain("cpu");
    expect(vocab).toContain("bananas");

    const sidecar = fs.readFileSync(vocabPath, "utf-8").split("\n").filter(Boolean);
    expect(sidecar).toEqual(vocab);

    const { rows } = readEmbeddings(out);
    expect(rows.length).toBe(vocab.length);
    for (let i = 0; i < vocab.length; i++) {
      expect(Array.from(rows[i])).toEqual(Array.from(encodeText(vocab[i], 48)));
    }
  });
});
