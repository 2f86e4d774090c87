#!/usr/bin/env node
/**
 * Adapter CLI: `prep` (raw JSONL -> cleaned JSONL), `encode` (JSONL ->
 * CBW1 + manifest), `encode-vocab` (JSONL -> word-vector CBW1 + sidecar
 * vocabulary). Exit code 0 on success, 2 on input validation failure.
 */

import * as fs from "fs";
import { DEFAULT_DIM, DEFAULT_MODEL } from "./encoder";
import { encodeDocuments, encodeVocabulary, readJsonl, writeJsonl } from "./encode";
import { preprocess, RawCorpusEntry } from "./preprocess";

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[], required: string[], optional: string[] = []): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const name = argv[i];
    if (!name.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${JSON.stringify(name)}`);
    }
    const key = name.slice(2);
    if (!required.includes(key) && !optional.includes(key)) {
      throw new Error(`unknown flag --${key}`);
    }
    flags[key] = argv[i + 1];
  }
  for (const key of required) {
    if (!(key in flags)) throw new Error(`missing required flag --${key}`);
  }
  return flags;
}

function readRawEntries(filePath: string): RawCorpusEntry[] {
  const entries: RawCorpusEntry[] = [];
  const lines = fs.readFileSync(filePath, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line === "") continue;
    let obj: RawCorpusEntry;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${filePath}:${i + 1}: invalid JSON`);
    }
    if (typeof obj.id !== "string" || typeof obj.text !== "string") {
      throw new Error(`${filePath}:${i + 1}: missing id or text`);
    }
    entries.push(obj);
  }
  return entries;
}

function cmdPrep(argv: string[]): void {
  const flags = parseFlags(argv, ["input", "output"]);
  const docs = preprocess(readRawEntries(flags.input));
  writeJsonl(flags.output, docs);
  const flagged = docs.filter((d) => d.flagged).length;
  console.log(JSON.stringify({ documents: docs.length, flagged }));
}

function cmdEncode(argv: string[]): void {
  const flags = parseFlags(argv, ["input", "output", "manifest"], ["dim", "model"]);
  const dim = flags.dim ? parseInt(flags.dim, 10) : DEFAULT_DIM;
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`invalid --dim ${JSON.stringify(flags.dim)}`);
  }
  const docs = readJsonl(flags.input);
  if (docs.length === 0) throw new Error("empty corpus");
  const manifest = encodeDocuments(
    docs, flags.output, flags.manifest, dim, flags.model ?? DEFAULT_MODEL
  );
  console.log(JSON.stringify({ count: manifest.count, dimensionality: dim }));
}

function cmdEncodeVocab(argv: string[]): void {
  const flags = parseFlags(argv, ["input", "output", "vocab"], ["dim"]);
  const dim = flags.dim ? parseInt(flags.dim, 10) : DEFAULT_DIM;
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`invalid --dim ${JSON.stringify(flags.dim)}`);
  }
  const docs = readJsonl(flags.input);
  const vocab = encodeVocabulary(docs, flags.output, flags.vocab, dim);
  console.log(JSON.stringify({ words: vocab.length, dimensionality: dim }));
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "prep":
        cmdPrep(rest);
        return 0;
      case "encode":
        cmdEncode(rest);
        return 0;
      case "encode-vocab":
        cmdEncodeVocab(rest);
        return 0;
      default:
        throw new Error(
          `usage: cobwebtm-embed {prep|encode|encode-vocab} --flags (got ${JSON.stringify(command ?? "")})`
        );
    }
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
