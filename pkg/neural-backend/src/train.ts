import * as tf from "@tensorflow/tfjs";
import { EpochLog } from "./checkpoint";
import { loadSequences, makeBatches, shuffled, splitTrainVal } from "./data";
import { ModelConfig, TransformerLM } from "./model";
import { Vocab, loadVocab } from "./vocab";

export interface TrainConfig {
  contextWindow: number;
  learningRate: number;
  batchSize: number;
  epochs: number;
  weightDecay: number;
  /** desk-scale knobs; the reference setup is far larger */
  dim: number;
  nLayers: number;
  nHeads: number;
  seed: number;
  valFraction: number;
  patience: number;
}

/** Reference hyperparameters; only the model-scale knobs are desk-sized. */
export const DEFAULT_TRAIN_CONFIG: TrainConfig = {
  contextWindow: 1024,
  learningRate: 5e-5,
  batchSize: 4,
  epochs: 10,
  weightDecay: 0.01,
  dim: 128,
  nLayers: 2,
  nHeads: 2,
  seed: 0,
  valFraction: 0.1,
  patience: 2,
};

export interface TrainResult {
  model: TransformerLM;
  vocab: Vocab;
  log: EpochLog[];
  stoppedEarly: boolean;
}

/**
 * Train an autoregressive next-token model on an augmented-corpus file.
 *
 * The vocabulary must be the primary tokenizer's export; any training token
 * outside it aborts before training starts.  Early stopping watches the
 * held-out loss and restores the best weights.
 */
export function train(
  augmentedPath: string,
  vocabPath: string,
  overrides: Partial<TrainConfig> = {},
  onEpoch?: (log: EpochLog) => void
): TrainResult {
  const config: TrainConfig = { ...DEFAULT_TRAIN_CONFIG, ...overrides };
  const vocab = loadVocab(vocabPath);
  // encodeStrict inside loadSequences raises on vocabulary mismatch
  const sequences = loadSequences(augmentedPath, vocab, config.contextWindow);
  const [trainSeqs, valSeqs] = splitTrainVal(sequences, config.valFraction, config.seed);
  const modelConfig: ModelConfig = {
    vocabSize: vocab.words.length,
    contextWindow: config.contextWindow,
    dim: config.dim,
    nLayers: config.nLayers,
    nHeads: config.nHeads,
    seed: config.seed,
  };
  const model = new TransformerLM(modelConfig);
  const optimizer = tf.train.adam(config.learningRate);
  const valBatches = makeBatches(valSeqs, config.batchSize);

  const log: EpochLog[] = [];
  let best = Infinity;
  let bestWeights = model.snapshot();
  let sinceBest = 0;
  let stoppedEarly = false;
  for (let epoch = 1; epoch <= config.epochs; epoch++) {
    const order = shuffled(trainSeqs, config.seed + epoch * 7919);
    let running = 0;
    let steps = 0;
    for (const batch of makeBatches(order, config.batchSize)) {
      running += model.trainStep(batch, optimizer, config.weightDecay);
      steps += 1;
    }
    const entry: EpochLog = {
      epoch,
      trainLoss: running / Math.max(steps, 1),
      valLoss: model.evalLoss(valBatches),
    };
    log.push(entry);
    onEpoch?.(entry);
    if (entry.valLoss < best - 1e-6) {
      best = entry.valLoss;
      bestWeights = model.snapshot();
      sinceBest = 0;
    } else {
      sinceBest += 1;
      if (sinceBest >= config.patience) {
        stoppedEarly = true;
        break;
      }
    }
  }
  model.restore(bestWeights);
  optimizer.dispose();
  return { model, vocab, log, stoppedEarly };
}
