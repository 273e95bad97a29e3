export { MAGIC, POOLING_CODES, POOLING_NAMES, StoreFormatError, TfemReader, TfemWriter, VERSION, crc32 } from "./tfem.js";
export { FixedEncoder, HashEncoder, makeEncoder, pool, tokenize } from "./encoder.js";
export type { Encoder, EncodeResult } from "./encoder.js";
export { EmbedJobError, JOB_DEFAULTS, embedCorpus, readFragments } from "./embed.js";
export type { EmbedJob, EmbedSummary, Fragment } from "./embed.js";
export { buildApp } from "./service.js";
