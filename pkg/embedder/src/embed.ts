/**
 * Batch embedding: fragments JSONL in, TFEM store out.
 */

import { readFileSync } from "node:fs";

import { Encoder, pool } from "./encoder.js";
import { POOLING_CODES, TfemWriter } from "./tfem.js";

export interface Fragment {
  fragment_id: string;
  source: string;
}

export interface EmbedJob {
  fragmentsPath: string;
  outPath: string;
  pooling: string;
  maxTokens: number;
  batchSize: number;
  /** Skip this many fragments and append to an existing store. */
  resumeAt: number;
}

export const JOB_DEFAULTS = { pooling: "mean", maxTokens: 512, batchSize: 32, resumeAt: 0 };

/** Raised mid-job with the index of the first unprocessed fragment. */
export class EmbedJobError extends Error {
  readonly cursor: number;
  readonly fragmentId: string;

  constructor(message: string, cursor: number, fragmentId: string) {
    super(message);
    this.cursor = cursor;
    this.fragmentId = fragmentId;
  }
}

export function readFragments(path: string): Fragment[] {
  const fragments: Fragment[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i]!.trim();
    if (!line) continue;
    let row: unknown;
    try {
      row = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${i + 1}: not valid JSON (${err})`);
    }
    const obj = row as Record<string, unknown>;
    if (typeof obj.fragment_id !== "string" || typeof obj.source !== "string") {
      throw new Error(`${path}:${i + 1}: needs string fragment_id and source`);
    }
    fragments.push({ fragment_id: obj.fragment_id, source: obj.source });
  }
  return fragments;
}

export interface EmbedSummary {
  model: string;
  dimension: number;
  pooling: string;
  embedded: number;
  skipped: number;
  truncated: number;
  total: number;
}

/**
 * Embed every fragment in the job, one store record per fragment, in
 * input order. Batching only controls progress reporting granularity;
 * inference here is synchronous. On any encoder or write failure the
 * store is closed with everything written so far and an EmbedJobError
 * carries the cursor to resume from (pass it back as job.resumeAt).
 */
export function embedCorpus(
  job: EmbedJob,
  encoder: Encoder,
  onBatch?: (done: number, total: number) => void
): EmbedSummary {
  if (!(job.pooling in POOLING_CODES)) {
    throw new Error(`unknown pooling ${JSON.stringify(job.pooling)}`);
  }
  const fragments = readFragments(job.fragmentsPath);
  if (job.resumeAt < 0 || job.resumeAt > fragments.length) {
    throw new Error(`resume cursor ${job.resumeAt} out of range 0..${fragments.length}`);
  }
  const writer = new TfemWriter(job.outPath, encoder.hidden, job.pooling, job.resumeAt > 0);
  let truncated = 0;
  let skipped = 0;
  let done = 0;
  try {
    for (let i = job.resumeAt; i < fragments.length; i++) {
      const fragment = fragments[i]!;
      if (writer.has(fragment.fragment_id)) {
        skipped++; // already in the store from the run being resumed
        continue;
      }
      let vector: Float32Array;
      try {
        const result = encoder.encode(fragment.source, job.maxTokens);
        if (result.truncated) truncated++;
        vector = pool(result, job.pooling);
      } catch (err) {
        throw new EmbedJobError(
          `embedding ${fragment.fragment_id} failed: ${err instanceof Error ? err.message : err}`,
          i,
          fragment.fragment_id
        );
      }
      writer.write(fragment.fragment_id, vector);
      done++;
      if (onBatch && (done % job.batchSize === 0 || i === fragments.length - 1)) {
        onBatch(i + 1, fragments.length);
      }
    }
  } finally {
    writer.close();
  }
  return {
    model: encoder.id,
    dimension: encoder.hidden,
    pooling: job.pooling,
    embedded: done,
    skipped,
    truncated,
    total: fragments.length,
  };
}
