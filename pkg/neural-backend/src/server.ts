import express, { Express } from "express";
import { TransformerLM } from "./model";
import { MID, PRE, SUF, Vocab, encode } from "./vocab";

export interface ScoreRequest {
  mode: "forward" | "infill";
  pre: string[];
  suf: string[];
  candidates: string[];
}

/**
 * Build the inference query for the infill-trained model: context blocks in
 * canonical <PRE>-first order, then <MID>; candidates are scored from the
 * next-token distribution after <MID>, which is a softmax over the full
 * vocabulary (so candidate scores are already renormalized).
 */
export function buildQuery(vocab: Vocab, mode: "forward" | "infill", pre: string[], suf: string[]): number[] {
  const sufTokens = mode === "forward" ? [] : suf;
  return encode(vocab, [PRE, ...pre, SUF, ...sufTokens, MID]);
}

export function scoreRequest(
  model: TransformerLM,
  vocab: Vocab,
  req: ScoreRequest
): { logprobs: Record<string, number>; unk_candidates: string[] } {
  const query = buildQuery(vocab, req.mode, req.pre, req.suf);
  const logProbs = model.nextLogProbs(query);
  const out: Record<string, number> = {};
  const unk: string[] = [];
  for (const word of req.candidates) {
    let id = vocab.index.get(word);
    if (id === undefined) {
      id = vocab.unkId;
      unk.push(word);
    }
    out[word] = logProbs[id];
  }
  return { logprobs: out, unk_candidates: unk };
}

function validate(body: unknown): ScoreRequest | string {
  if (typeof body !== "object" || body === null) return "request body must be a JSON object";
  const req = body as Record<string, unknown>;
  if (req.mode !== "forward" && req.mode !== "infill") {
    return "mode must be 'forward' or 'infill'";
  }
  const pre = req.pre ?? [];
  const suf = req.suf ?? [];
  for (const [name, val] of [["pre", pre], ["suf", suf]] as const) {
    if (!Array.isArray(val) || !val.every((t) => typeof t === "string")) {
      return `'${name}' must be a list of strings`;
    }
  }
  const candidates = req.candidates;
  if (!Array.isArray(candidates) || candidates.length === 0 || !candidates.every((t) => typeof t === "string")) {
    return "'candidates' must be a non-empty list of strings";
  }
  return { mode: req.mode, pre: pre as string[], suf: suf as string[], candidates };
}

export function createApp(model: TransformerLM, vocab: Vocab, modelId: string): Express {
  const app = express();
  app.use(express.json({ limit: "8mb" }));
  app.get("/health", (_req, res) => {
    res.json({ status: "ok", model_id: modelId });
  });
  app.post("/score", (req, res) => {
    const parsed = validate(req.body);
    if (typeof parsed === "string") {
      res.status(400).json({ error: parsed });
      return;
    }
    try {
      const { logprobs, unk_candidates } = scoreRequest(model, vocab, parsed);
      const body: Record<string, unknown> = { logprobs, model_id: modelId };
      if (unk_candidates.length > 0) body.unk_candidates = unk_candidates;
      res.json(body);
    } catch (err) {
      res.status(500).json({ error: `backend fault: ${err}` });
    }
  });
  // malformed JSON bodies surface as a 400 with a reason
  app.use((err: Error, _req: express.Request, res: express.Response, next: express.NextFunction) => {
    if (err) {
      res.status(400).json({ error: `invalid request body: ${err.message}` });
      return;
    }
    next();
  });
  return app;
}
