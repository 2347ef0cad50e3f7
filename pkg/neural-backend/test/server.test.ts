import { Server } from "http";
import { AddressInfo } from "net";
import { join } from "path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { createApp } from "../src/server";
import { train } from "../src/train";

const FIXTURES = join(__dirname, "..", "fixtures");

let server: Server;
let base: string;
let vocabWords: string[];

beforeAll(async () => {
  const result = train(join(FIXTURES, "augmented.txt"), join(FIXTURES, "vocab.json"), {
    contextWindow: 32,
    dim: 16,
    nLayers: 1,
    nHeads: 2,
    batchSize: 16,
    epochs: 1,
    learningRate: 3e-3,
    seed: 2,
  });
  vocabWords = result.vocab.words;
  const app = createApp(result.model, result.vocab, "nb:test");
  await new Promise<void>((resolve) => {
    server = app.listen(0, "127.0.0.1", () => resolve());
  });
  base = `http://127.0.0.1:${(server.address() as AddressInfo).port}`;
});

afterAll(() => {
  server?.close();
});

async function score(body: unknown): Promise<{ status: number; body: any }> {
  const res = await fetch(`${base}/score`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: typeof body === "string" ? body : JSON.stringify(body),
  });
  return { status: res.status, body: await res.json() };
}

describe("wire protocol", () => {
  it("answers health checks with the model id", async () => {
    const res = await fetch(`${base}/health`);
    expect(res.status).toBe(200);
    expect((await res.json()).model_id).toBe("nb:test");
  });

  it("full-vocabulary forward request sums to 1 within 1e-4", async () => {
    const { status, body } = await score({
      mode: "forward",
      pre: ["red", "blue"],
      suf: [],
      candidates: vocabWords,
    });
    expect(status).toBe(200);
    expect(body.model_id).toBe("nb:test");
    const total = Object.values(body.logprobs as Record<string, number>)
      .map((lp) => Math.exp(lp))
      .reduce((a, b) => a + b, 0);
    expect(Math.abs(total - 1.0)).toBeLessThan(1e-4);
  });

  it("infill with an empty suffix equals the forward query", async () => {
    const forward = await score({
      mode: "forward",
      pre: ["red"],
      suf: [],
      candidates: vocabWords,
    });
    const infill = await score({
      mode: "infill",
      pre: ["red"],
      suf: [],
      candidates: vocabWords,
    });
    let kl = 0;
    for (const w of vocabWords) {
      const p = Math.exp(forward.body.logprobs[w]);
      kl += p * (forward.body.logprobs[w] - infill.body.logprobs[w]);
    }
    expect(kl).toBeLessThan(0.1);
    expect(forward.body.logprobs).toEqual(infill.body.logprobs);
  });

  it("infill conditions on the suffix", async () => {
    const a = await score({ mode: "infill", pre: ["red"], suf: ["blue"], candidates: vocabWords });
    const b = await score({ mode: "infill", pre: ["red"], suf: ["moon"], candidates: vocabWords });
    expect(a.body.logprobs).not.toEqual(b.body.logprobs);
  });

  it("is deterministic in eval mode", async () => {
    const req = { mode: "forward", pre: ["green"], suf: [], candidates: ["red", "blue"] };
    const first = await score(req);
    const second = await score(req);
    expect(first.body.logprobs).toEqual(second.body.logprobs);
  });

  it("maps unknown candidates to <unk> and flags them", async () => {
    const { status, body } = await score({
      mode: "forward",
      pre: [],
      suf: [],
      candidates: ["red", "window"],
    });
    expect(status).toBe(200);
    expect(body.unk_candidates).toEqual(["window"]);
    expect(body.logprobs.window).toBeTypeOf("number");
  });

  it("rejects malformed requests with HTTP 400 and a reason", async () => {
    const cases: unknown[] = [
      { mode: "sideways", pre: [], suf: [], candidates: ["red"] },
      { mode: "forward", pre: "red", suf: [], candidates: ["red"] },
      { mode: "forward", pre: [], suf: [], candidates: [] },
      "{this is not json",
    ];
    for (const payload of cases) {
      const { status, body } = await score(payload);
      expect(status).toBe(400);
      expect(body.error).toBeTypeOf("string");
    }
  });
});
