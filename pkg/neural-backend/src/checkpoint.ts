import { createHash } from "crypto";
import { readFileSync, writeFileSync } from "fs";
import { ModelConfig, TransformerLM } from "./model";

export interface Checkpoint {
  model: TransformerLM;
  vocabSha256: string;
  modelId: string;
  trainingLog: EpochLog[];
}

export interface EpochLog {
  epoch: number;
  trainLoss: number;
  valLoss: number;
}

interface StoredWeights {
  [name: string]: { shape: number[]; data: string };
}

function toBase64(data: Float32Array): string {
  return Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64");
}

function fromBase64(b64: string): Float32Array {
  const buf = Buffer.from(b64, "base64");
  return new Float32Array(buf.buffer, buf.byteOffset, buf.byteLength / 4);
}

export function saveCheckpoint(
  path: string,
  model: TransformerLM,
  vocabSha256: string,
  trainingLog: EpochLog[]
): void {
  const weights: StoredWeights = {};
  for (const [name, variable] of model.vars) {
    weights[name] = {
      shape: variable.shape as number[],
      data: toBase64(variable.dataSync() as Float32Array),
    };
  }
  const payload = {
    format: "neural-backend-checkpoint",
    version: 1,
    config: model.config,
    vocab_sha256: vocabSha256,
    training_log: trainingLog,
    weights,
  };
  writeFileSync(path, JSON.stringify(payload));
}

export function loadCheckpoint(path: string): Checkpoint {
  const raw = readFileSync(path);
  const payload = JSON.parse(raw.toString("utf-8"));
  if (payload.format !== "neural-backend-checkpoint" || payload.version !== 1) {
    throw new Error(`${path}: not a version-1 checkpoint`);
  }
  const config = payload.config as ModelConfig;
  const model = new TransformerLM(config);
  const weights = new Map<string, Float32Array>();
  for (const [name, entry] of Object.entries(payload.weights as StoredWeights)) {
    weights.set(name, fromBase64(entry.data));
  }
  model.restore(weights);
  return {
    model,
    vocabSha256: payload.vocab_sha256,
    modelId: "nb:" + createHash("sha256").update(raw).digest("hex").slice(0, 16),
    trainingLog: payload.training_log ?? [],
  };
}
