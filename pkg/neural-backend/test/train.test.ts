import { mkdtempSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";
import { loadCheckpoint, saveCheckpoint } from "../src/checkpoint";
import { DEFAULT_TRAIN_CONFIG, train } from "../src/train";

const FIXTURES = join(__dirname, "..", "fixtures");
const VOCAB = join(FIXTURES, "vocab.json");

const TINY = {
  contextWindow: 32,
  dim: 16,
  nLayers: 1,
  nHeads: 2,
  batchSize: 16,
  seed: 1,
};

describe("training defaults", () => {
  it("match the reference hyperparameters", () => {
    expect(DEFAULT_TRAIN_CONFIG.contextWindow).toBe(1024);
    expect(DEFAULT_TRAIN_CONFIG.learningRate).toBe(5e-5);
    expect(DEFAULT_TRAIN_CONFIG.batchSize).toBe(4);
    expect(DEFAULT_TRAIN_CONFIG.epochs).toBe(10);
    expect(DEFAULT_TRAIN_CONFIG.weightDecay).toBe(0.01);
  });
});

describe("train()", () => {
  it("overfits a single repeated utterance below 0.05 nats per token", () => {
    const dir = mkdtempSync(join(tmpdir(), "overfit-"));
    const data = join(dir, "one.txt");
    const line = "<PRE> red blue <SUF> green rock <MID> sky <eos>";
    writeFileSync(data, Array(32).fill(line).join("\n") + "\n");
    const result = train(data, VOCAB, {
      ...TINY,
      dim: 32,
      epochs: 120,
      patience: 120,
      learningRate: 1e-2,
      weightDecay: 0,
    });
    const final = result.log[result.log.length - 1];
    expect(final.valLoss).toBeLessThan(0.05);
  });

  it("refuses to train when the data is not covered by the shared vocabulary", () => {
    const dir = mkdtempSync(join(tmpdir(), "mismatch-"));
    const data = join(dir, "bad.txt");
    writeFileSync(data, "<PRE> red <SUF> <MID> quetzal <eos>\n");
    expect(() => train(data, VOCAB, { ...TINY, epochs: 1 })).toThrow(/quetzal/);
  });

  it("stops early within the epoch cap when validation stalls", () => {
    const result = train(join(FIXTURES, "augmented.txt"), VOCAB, {
      ...TINY,
      epochs: 10,
      learningRate: 1e-12, // no learning: first epoch sets the best loss
      patience: 2,
    });
    expect(result.stoppedEarly).toBe(true);
    expect(result.log.length).toBeLessThanOrEqual(10);
    expect(result.log.length).toBe(3); // 1 best + 2 stalled
  });

  it("is deterministic given the seed", () => {
    const opts = { ...TINY, epochs: 2, learningRate: 3e-3 };
    const a = train(join(FIXTURES, "augmented.txt"), VOCAB, opts);
    const b = train(join(FIXTURES, "augmented.txt"), VOCAB, opts);
    expect(a.log).toEqual(b.log);
    const q = [a.vocab.preId, a.vocab.index.get("red")!, a.vocab.sufId, a.vocab.midId];
    const pa = a.model.nextLogProbs(q);
    const pb = b.model.nextLogProbs(q);
    expect(Array.from(pa)).toEqual(Array.from(pb));
  });

  it("checkpoints round-trip bit-for-bit", () => {
    const result = train(join(FIXTURES, "augmented.txt"), VOCAB, {
      ...TINY,
      epochs: 1,
      learningRate: 3e-3,
    });
    const dir = mkdtempSync(join(tmpdir(), "ckpt-"));
    const path = join(dir, "model.ckpt.json");
    saveCheckpoint(path, result.model, result.vocab.sha256, result.log);
    const loaded = loadCheckpoint(path);
    expect(loaded.vocabSha256).toBe(result.vocab.sha256);
    expect(loaded.trainingLog).toEqual(result.log);
    const q = [result.vocab.preId, result.vocab.sufId, result.vocab.midId];
    expect(Array.from(loaded.model.nextLogProbs(q))).toEqual(
      Array.from(result.model.nextLogProbs(q))
    );
  });
});
