/**
 * Small HTTP face over one loaded encoder.
 *
 *   GET  /health                        -> {"dim": <hidden size>}
 *   POST /embed {"source", "pooling"?}  -> {"vector": [floats]}
 *
 * Requests are independent; express serializes them on the event loop
 * and the encoders are synchronous, so there is no shared mutable state
 * to guard. Bad input is 400, anything the encoder throws is 500.
 */

import express, { Express, NextFunction, Request, Response } from "express";

import { Encoder, pool } from "./encoder.js";
import { POOLING_CODES } from "./tfem.js";

export function buildApp(encoder: Encoder, maxTokens = 512, defaultPooling = "mean"): Express {
  const app = express();
  app.use(express.json({ limit: "2mb" }));

  app.get("/health", (_req: Request, res: Response) => {
    res.json({ dim: encoder.hidden });
  });

  app.post("/embed", (req: Request, res: Response) => {
    const body = req.body as Record<string, unknown> | undefined;
    const source = body?.source;
    if (typeof source !== "string" || source.length === 0) {
      res.status(400).json({ error: "source must be a non-empty string" });
      return;
    }
    const pooling = body?.pooling ?? defaultPooling;
    if (typeof pooling !== "string" || !(pooling in POOLING_CODES)) {
      res.status(400).json({ error: `pooling must be one of ${Object.keys(POOLING_CODES).join(", ")}` });
      return;
    }
    let vector: Float32Array;
    try {
      vector = pool(encoder.encode(source, maxTokens), pooling);
    } catch (err) {
      res.status(500).json({ error: err instanceof Error ? err.message : String(err) });
      return;
    }
    res.json({ vector: Array.from(vector) });
  });

  // express.json() throws on malformed bodies; report those as 400, not 500
  app.use((err: Error, _req: Request, res: Response, next: NextFunction) => {
    if (res.headersSent) {
      next(err);
      return;
    }
    const status = (err as { status?: number }).status;
    res.status(status && status >= 400 && status < 500 ? 400 : 500).json({ error: err.message });
  });

  return app;
}
