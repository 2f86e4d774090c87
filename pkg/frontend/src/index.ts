export { preprocess, tokenize, RawCorpusEntry, PreppedDocument } from "./preprocess";
export { STOPWORDS, STOPWORDS_VERSION } from "./stopwords";
export { encodeText, DEFAULT_DIM, DEFAULT_MODEL } from "./encoder";
export {
  encodeDocuments,
  encodeVocabulary,
  readJsonl,
  writeJsonl,
  Manifest,
} from "./encode";
export {
  MAGIC,
  serialize,
  deserialize,
  writeEmbeddings,
  readEmbeddings,
  atomicWrite,
  sha256,
} from "./cbw1";
