import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, test } from "vitest";

import { EmbedJob, EmbedJobError, embedCorpus, readFragments } from "../src/embed.js";
import { Encoder, EncodeResult, HashEncoder, pool } from "../src/encoder.js";
import { TfemReader } from "../src/tfem.js";

const SOURCES: Record<string, string> = {
  f1: "int add(int a, int b) { return a + b; }",
  f2: "int sub(int a, int b) { return a - b; }",
  f3: "void log(String m) { System.out.println(m); }",
  f4: "boolean same(int a, int b) { return a == b; }",
};

function writeCorpus(dir: string): string {
  const path = join(dir, "fragments.jsonl");
  const lines = Object.entries(SOURCES).map(([id, source]) =>
    JSON.stringify({ fragment_id: id, project_id: "p", source })
  );
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

function job(dir: string, overrides: Partial<EmbedJob> = {}): EmbedJob {
  return {
    fragmentsPath: writeCorpus(dir),
    outPath: join(dir, "out.tfem"),
    pooling: "mean",
    maxTokens: 512,
    batchSize: 2,
    resumeAt: 0,
    ...overrides,
  };
}

/** Encodes like HashEncoder but dies on one chosen fragment source. */
class FlakyEncoder implements Encoder {
  readonly id = "flaky";
  readonly hidden: number;
  private inner: HashEncoder;
  private poison: string;

  constructor(hidden: number, poison: string) {
    this.inner = new HashEncoder(hidden);
    this.hidden = hidden;
    this.poison = poison;
  }

  encode(source: string, maxTokens: number): EncodeResult {
    if (source === this.poison) throw new Error("simulated model failure");
    return this.inner.encode(source, maxTokens);
  }
}

describe("readFragments", () => {
  test("parses the jsonl rows in order", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    const rows = readFragments(writeCorpus(dir));
    expect(rows.map((r) => r.fragment_id)).toEqual(["f1", "f2", "f3", "f4"]);
  });

  test("bad rows are named by line", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    const path = join(dir, "bad.jsonl");
    writeFileSync(path, '{"fragment_id": "a", "source": "x"}\n{"fragment_id": 3}\n');
    expect(() => readFragments(path)).toThrow(/bad.jsonl:2/);
  });
});

describe("embedCorpus", () => {
  test("one record per fragment, vectors match direct pooling", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    const j = job(dir);
    const enc = new HashEncoder(16);
    const summary = embedCorpus(j, enc);
    expect(summary).toMatchObject({
      model: "hash-16", dimension: 16, pooling: "mean",
      embedded: 4, skipped: 0, total: 4,
    });
    const r = new TfemReader(j.outPath);
    expect(r.ids).toEqual(["f1", "f2", "f3", "f4"]);
    const expected = pool(new HashEncoder(16).encode(SOURCES.f3!, 512), "mean");
    expect(Array.from(r.get("f3"))).toEqual(Array.from(expected));
  });

  test("truncation is counted", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    const summary = embedCorpus(job(dir, { maxTokens: 5 }), new HashEncoder(8));
    expect(summary.truncated).toBe(4);
  });

  test("batch callback fires on batch boundaries and at the end", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    const seen: number[] = [];
    embedCorpus(job(dir, { batchSize: 3 }), new HashEncoder(8), (done) => seen.push(done));
    expect(seen).toEqual([3, 4]);
  });

  test("a failed fragment raises a cursor and the job resumes", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    const j = job(dir);
    let cursor = -1;
    try {
      embedCorpus(j, new FlakyEncoder(16, SOURCES.f3!));
      expect.unreachable("f3 should have failed");
    } catch (err) {
      expect(err).toBeInstanceOf(EmbedJobError);
      cursor = (err as EmbedJobError).cursor;
      expect((err as EmbedJobError).fragmentId).toBe("f3");
    }
    expect(cursor).toBe(2);
    // everything before the cursor survived the crash
    expect(new TfemReader(j.outPath).ids).toEqual(["f1", "f2"]);

    const summary = embedCorpus({ ...j, resumeAt: cursor }, new HashEncoder(16));
    expect(summary.embedded).toBe(2);
    const r = new TfemReader(j.outPath);
    expect(r.ids).toEqual(["f1", "f2", "f3", "f4"]);
    const expected = pool(new HashEncoder(16).encode(SOURCES.f1!, 512), "mean");
    expect(Array.from(r.get("f1"))).toEqual(Array.from(expected));
  });

  test("resume skips fragments already present", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    const j = job(dir);
    embedCorpus(j, new HashEncoder(16));
    const summary = embedCorpus({ ...j, resumeAt: 1 }, new HashEncoder(16));
    expect(summary).toMatchObject({ embedded: 0, skipped: 3 });
    expect(new TfemReader(j.outPath).count).toBe(4);
  });

  test("bad pooling and bad cursor are rejected up front", () => {
    const dir = mkdtempSync(join(tmpdir(), "embed-"));
    expect(() => embedCorpus(job(dir, { pooling: "sum" }), new HashEncoder(4))).toThrow(/pooling/);
    expect(() => embedCorpus(job(dir, { resumeAt: 99 }), new HashEncoder(4))).toThrow(/cursor/);
  });
});
