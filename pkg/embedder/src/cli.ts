#!/usr/bin/env node
/**
 * clonefuse-embedder <embed|serve> [options]
 *
 *   embed  --fragments f.jsonl --out store.tfem [--pooling mean]
 *          [--model hash-768] [--max-tokens 512] [--batch-size 32] [--resume N]
 *   serve  [--port 8090] [--model hash-768] [--max-tokens 512] [--pooling mean]
 *
 * embed exits 0 with a one-line JSON summary; a failed job exits 1 and
 * prints the resume cursor. Usage problems exit 2.
 */

import { parseArgs } from "node:util";

import { EmbedJobError, JOB_DEFAULTS, embedCorpus } from "./embed.js";
import { makeEncoder } from "./encoder.js";
import { buildApp } from "./service.js";

const USAGE = `usage: clonefuse-embedder embed --fragments <jsonl> --out <tfem> [options]
       clonefuse-embedder serve [--port 8090] [options]
options: --model hash-768 --pooling cls|mean|max --max-tokens 512 --batch-size 32 --resume N`;

function usageError(message: string): never {
  process.stderr.write(`clonefuse-embedder: ${message}\n${USAGE}\n`);
  process.exit(2);
}

function intOption(value: string | undefined, fallback: number, name: string): number {
  if (value === undefined) return fallback;
  const n = Number(value);
  if (!Number.isInteger(n) || n < 0) usageError(`--${name} wants a non-negative integer, got ${value}`);
  return n;
}

export function main(argv: string[]): void {
  const command = argv[0];
  let parsed;
  try {
    parsed = parseArgs({
      args: argv.slice(1),
      options: {
        fragments: { type: "string" },
        out: { type: "string" },
        pooling: { type: "string", default: JOB_DEFAULTS.pooling },
        model: { type: "string", default: "hash-768" },
        "max-tokens": { type: "string" },
        "batch-size": { type: "string" },
        resume: { type: "string" },
        port: { type: "string" },
      },
    });
  } catch (err) {
    usageError(err instanceof Error ? err.message : String(err));
  }
  const opts = parsed.values;

  let encoder;
  try {
    encoder = makeEncoder(opts.model!);
  } catch (err) {
    usageError(err instanceof Error ? err.message : String(err));
  }
  const maxTokens = intOption(opts["max-tokens"], JOB_DEFAULTS.maxTokens, "max-tokens");

  if (command === "embed") {
    if (!opts.fragments || !opts.out) usageError("embed needs --fragments and --out");
    try {
      const summary = embedCorpus(
        {
          fragmentsPath: opts.fragments,
          outPath: opts.out,
          pooling: opts.pooling!,
          maxTokens,
          batchSize: intOption(opts["batch-size"], JOB_DEFAULTS.batchSize, "batch-size"),
          resumeAt: intOption(opts.resume, JOB_DEFAULTS.resumeAt, "resume"),
        },
        encoder,
        (done, total) => process.stderr.write(`embedded ${done}/${total}\n`)
      );
      process.stdout.write(JSON.stringify(summary) + "\n");
    } catch (err) {
      if (err instanceof EmbedJobError) {
        process.stderr.write(
          `clonefuse-embedder: ${err.message}\nresume with --resume ${err.cursor}\n`
        );
      } else {
        process.stderr.write(`clonefuse-embedder: ${err instanceof Error ? err.message : err}\n`);
      }
      process.exit(1);
    }
    return;
  }

  if (command === "serve") {
    const port = intOption(opts.port, 8090, "port");
    const app = buildApp(encoder, maxTokens, opts.pooling!);
    app.listen(port, () => {
      process.stderr.write(`clonefuse-embedder: ${encoder.id} (dim ${encoder.hidden}) on :${port}\n`);
    });
    return;
  }

  usageError(command ? `unknown command ${command}` : "missing command");
}

main(process.argv.slice(2));
