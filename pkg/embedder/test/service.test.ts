import type { AddressInfo } from "node:net";
import type { Server } from "node:http";

import { afterAll, beforeAll, describe, expect, test } from "vitest";

import { Encoder, EncodeResult, HashEncoder, pool } from "../src/encoder.js";
import { buildApp } from "../src/service.js";

class BrokenEncoder implements Encoder {
  readonly id = "broken";
  readonly hidden = 4;
  encode(): EncodeResult {
    throw new Error("weights exploded");
  }
}

function listen(app: ReturnType<typeof buildApp>): Promise<Server> {
  return new Promise((resolve) => {
    const server = app.listen(0, () => resolve(server));
  });
}

function baseUrl(server: Server): string {
  return `http://127.0.0.1:${(server.address() as AddressInfo).port}`;
}

describe("embedding service", () => {
  let server: Server;
  let url: string;

  beforeAll(async () => {
    server = await listen(buildApp(new HashEncoder(8), 512, "mean"));
    url = baseUrl(server);
  });

  afterAll(() => {
    server.close();
  });

  test("health reports the encoder dimension", async () => {
    const res = await fetch(`${url}/health`);
    expect(res.status).toBe(200);
    expect(await res.json()).toEqual({ dim: 8 });
  });

  test("embed returns a dim-length vector matching direct pooling", async () => {
    const source = "int f(int x) { return x * 2; }";
    const res = await fetch(`${url}/embed`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ source, pooling: "max" }),
    });
    expect(res.status).toBe(200);
    const body = (await res.json()) as { vector: number[] };
    expect(body.vector).toHaveLength(8);
    const expected = pool(new HashEncoder(8).encode(source, 512), "max");
    // JSON carries f64; the stored values are f32, so fround comparison is exact
    expect(body.vector.map(Math.fround)).toEqual(Array.from(expected));
  });

  test("pooling defaults to the service default and modes differ", async () => {
    const post = async (body: unknown) => {
      const res = await fetch(`${url}/embed`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      return (await res.json()) as { vector: number[] };
    };
    const source = "while (a < b) { a += 1; }";
    const dflt = await post({ source });
    const mean = await post({ source, pooling: "mean" });
    const cls = await post({ source, pooling: "cls" });
    expect(dflt.vector).toEqual(mean.vector);
    expect(cls.vector).not.toEqual(mean.vector);
  });

  test("empty or missing source is a 400", async () => {
    for (const body of [{}, { source: "" }, { source: 42 }]) {
      const res = await fetch(`${url}/embed`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      expect(res.status).toBe(400);
    }
  });

  test("unknown pooling is a 400", async () => {
    const res = await fetch(`${url}/embed`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ source: "x", pooling: "sum" }),
    });
    expect(res.status).toBe(400);
  });

  test("malformed JSON body is a 400", async () => {
    const res = await fetch(`${url}/embed`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: "{nope",
    });
    expect(res.status).toBe(400);
  });
});

describe("encoder failures", () => {
  test("surface as 500 with the message", async () => {
    const server = await listen(buildApp(new BrokenEncoder()));
    try {
      const res = await fetch(`${baseUrl(server)}/embed`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ source: "int x;" }),
      });
      expect(res.status).toBe(500);
      expect(((await res.json()) as { error: string }).error).toMatch(/weights exploded/);
    } finally {
      server.close();
    }
  });
});
