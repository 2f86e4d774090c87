/**
 * Corpus cleaning: lowercase, strip punctuation, drop number-bearing
 * tokens, drop stopwords, drop tokens shorter than 3 characters. Token
 * order is preserved. Entries reduced to zero tokens are kept with an
 * empty token list and flagged.
 */

import { STOPWORDS } from "./stopwords";

export interface RawCorpusEntry {
  id: string;
  text: string;
  label?: string;
  timestamp?: string;
}

export interface PreppedDocument {
  id: string;
  text: string;
  tokens: string[];
  label?: string;
  timestamp?: string;
  /** Present (true) only when cleaning removed every token. */
  flagged?: boolean;
}

/** Apply the cleaning recipe to one text. */
export function tokenize(text: string): string[] {
  const out: string[] = [];
  for (const piece of text.toLowerCase().split(/\s+/)) {
    // strip punctuation but keep intra-word apostrophes so the stopword
    // list's contractions ("don't") match before the apostrophe is removed
    const trimmed = piece.replace(/^[^a-z0-9']+|[^a-z0-9']+$/g, "");
    if (trimmed === "" || STOPWORDS.has(trimmed)) continue;
    const token = trimmed.replace(/[^a-z0-9]/g, "");
    if (token === "" || /[0-9]/.test(token)) continue;
    if (token.length < 3 || STOPWORDS.has(token)) continue;
    out.push(token);
  }
  return out;
}

/** Clean a whole corpus, keeping empty results flagged rather than dropped. */
export function preprocess(entries: RawCorpusEntry[]): PreppedDocument[] {
  if (entries.length === 0) {
    throw new Error("empty corpus");
  }
  const seen = new Set<string>();
  return entries.map((entry) => {
    if (seen.has(entry.id)) {
      throw new Error(`duplicate id ${JSON.stringify(entry.id)}`);
    }
    seen.add(entry.id);
    const tokens = tokenize(entry.text);
    const doc: PreppedDocument = { id: entry.id, text: entry.text, tokens };
    if (entry.label !== undefined) doc.label = entry.label;
    if (entry.timestamp !== undefined) doc.timestamp = entry.timestamp;
    if (tokens.length === 0) doc.flagged = true;
    return doc;
  });
}
