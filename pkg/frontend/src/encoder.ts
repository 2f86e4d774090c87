/**
 * Deterministic hashed character-n-gram sentence encoder.
 *
 * This is an offline stand-in for a pretrained sentence encoder: no model
 * weights are required, output is bit-reproducible across runs, and texts
 * sharing character n-grams land near each other in cosine space. The
 * manifest records the model name so downstream consumers can tell the
 * stand-in apart from a neural encoder.
 */

export const DEFAULT_MODEL = "hashed-char-ngram-v1";
export const DEFAULT_DIM = 64;

const NGRAM_MIN = 3;
const NGRAM_MAX = 5;

/** FNV-1a 32-bit hash; small, stable, and dependency-free. */
function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** Embed one text into a unit-norm float32 vector of length `dim`. */
export function encodeText(text: string, dim: number = DEFAULT_DIM): Float32Array {
  const normalized = ` ${text.toLowerCase().replace(/\s+/g, " ").trim()} `;
  const acc = new Float64Array(dim);
  for (let n = NGRAM_MIN; n <= NGRAM_MAX; n++) {
    for (let i = 0; i + n <= normalized.length; i++) {
      const gram = normalized.slice(i, i + n);
      const h = fnv1a(`${n}:${gram}`);
      const bucket = h % dim;
      const sign = (h >>> 16) & 1 ? 1.0 : -1.0;
      acc[bucket] += sign;
    }
  }
  let norm = 0.0;
  for (const v of acc) norm += v * v;
  norm = Math.sqrt(norm);
  const out = new Float32Array(dim);
  if (norm > 0) {
    for (let d = 0; d < dim; d++) out[d] = Math.fround(acc[d] / norm);
  }
  return out;
}
