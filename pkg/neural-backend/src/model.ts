import * as tf from "@tensorflow/tfjs";
import { Batch } from "./data";

/** tanh-approximated GELU; tfjs has no built-in one. */
function gelu(x: tf.Tensor): tf.Tensor {
  const c = Math.sqrt(2 / Math.PI);
  const inner = x.add(x.pow(3).mul(0.044715)).mul(c);
  return x.mul(0.5).mul(tf.tanh(inner).add(1));
}

export interface ModelConfig {
  vocabSize: number;
  contextWindow: number;
  dim: number;
  nLayers: number;
  nHeads: number;
  seed: number;
}

/**
 * Desk-scale decoder-only transformer language model.
 *
 * Token + learned positional embeddings, pre-norm blocks with causal
 * multi-head self-attention and a 4x MLP, tied input/output embeddings.
 * Everything is kept in plain variables (no layers API) so checkpoints are a
 * flat name -> tensor map.
 */
export class TransformerLM {
  readonly config: ModelConfig;
  readonly vars = new Map<string, tf.Variable>();
  private seedCounter: number;

  constructor(config: ModelConfig) {
    if (config.dim % config.nHeads !== 0) {
      throw new Error("dim must be divisible by nHeads");
    }
    this.config = config;
    this.seedCounter = config.seed;
    const { vocabSize, contextWindow, dim, nLayers } = config;
    this.add("tok_emb", [vocabSize, dim], 0.02);
    this.add("pos_emb", [contextWindow, dim], 0.01);
    for (let l = 0; l < nLayers; l++) {
      this.addOnes(`l${l}.ln1.g`, [dim]);
      this.addZeros(`l${l}.ln1.b`, [dim]);
      this.add(`l${l}.attn.wqkv`, [dim, 3 * dim], 0.02);
      this.addZeros(`l${l}.attn.bqkv`, [3 * dim]);
      this.add(`l${l}.attn.wproj`, [dim, dim], 0.02);
      this.addZeros(`l${l}.attn.bproj`, [dim]);
      this.addOnes(`l${l}.ln2.g`, [dim]);
      this.addZeros(`l${l}.ln2.b`, [dim]);
      this.add(`l${l}.mlp.wfc`, [dim, 4 * dim], 0.02);
      this.addZeros(`l${l}.mlp.bfc`, [4 * dim]);
      this.add(`l${l}.mlp.wout`, [4 * dim, dim], 0.02);
      this.addZeros(`l${l}.mlp.bout`, [dim]);
    }
    this.addOnes("lnf.g", [dim]);
    this.addZeros("lnf.b", [dim]);
  }

  private add(name: string, shape: number[], std: number): void {
    this.vars.set(name, tf.variable(tf.randomNormal(shape, 0, std, "float32", this.seedCounter++)));
  }

  private addOnes(name: string, shape: number[]): void {
    this.vars.set(name, tf.variable(tf.ones(shape)));
  }

  private addZeros(name: string, shape: number[]): void {
    this.vars.set(name, tf.variable(tf.zeros(shape)));
  }

  private v(name: string): tf.Variable {
    const got = this.vars.get(name);
    if (!got) throw new Error(`missing variable ${name}`);
    return got;
  }

  private layerNorm(x: tf.Tensor, g: tf.Tensor, b: tf.Tensor): tf.Tensor {
    const { mean, variance } = tf.moments(x, -1, true);
    return x.sub(mean).div(variance.add(1e-5).sqrt()).mul(g).add(b);
  }

  /** [B, T, Din] x [Din, Dout]: flattened so 2D-weight gradients stay 2D
   * (tfjs's batched matmul cannot reduce broadcast gradients). */
  private dense(x: tf.Tensor, w: tf.Tensor, b?: tf.Tensor, transposeW = false): tf.Tensor {
    const [B, T, dIn] = x.shape as [number, number, number];
    const dOut = (transposeW ? w.shape[0] : w.shape[1]) as number;
    let out = x.reshape([B * T, dIn]).matMul(w, false, transposeW);
    if (b) out = out.add(b);
    return out.reshape([B, T, dOut]);
  }

  /** Causal-masked multi-head self-attention over [B, T, D]. */
  private attention(x: tf.Tensor, layer: number, T: number): tf.Tensor {
    const { dim, nHeads } = this.config;
    const dh = dim / nHeads;
    const B = x.shape[0]!;
    const qkv = this.dense(x, this.v(`l${layer}.attn.wqkv`), this.v(`l${layer}.attn.bqkv`));
    const [q, k, v] = tf.split(qkv, 3, -1).map((t) =>
      t.reshape([B, T, nHeads, dh]).transpose([0, 2, 1, 3])
    );
    let scores = q.matMul(k, false, true).div(Math.sqrt(dh));
    const causal = tf.linalg.bandPart(tf.ones([T, T]), -1, 0);
    scores = scores.add(causal.sub(1).mul(1e9));
    const out = tf.softmax(scores, -1).matMul(v);
    const merged = out.transpose([0, 2, 1, 3]).reshape([B, T, dim]);
    return this.dense(merged, this.v(`l${layer}.attn.wproj`), this.v(`l${layer}.attn.bproj`));
  }

  /** Logits [B, T, V] for int32 input ids [B, T]. */
  logits(ids: tf.Tensor): tf.Tensor {
    const T = ids.shape[1]!;
    if (T > this.config.contextWindow) {
      throw new Error(`sequence length ${T} exceeds context window ${this.config.contextWindow}`);
    }
    let x = tf.gather(this.v("tok_emb"), ids).add(
      tf.gather(this.v("pos_emb"), tf.range(0, T, 1, "int32"))
    );
    for (let l = 0; l < this.config.nLayers; l++) {
      x = x.add(this.attention(this.layerNorm(x, this.v(`l${l}.ln1.g`), this.v(`l${l}.ln1.b`)), l, T));
      const pre = this.dense(
        this.layerNorm(x, this.v(`l${l}.ln2.g`), this.v(`l${l}.ln2.b`)),
        this.v(`l${l}.mlp.wfc`),
        this.v(`l${l}.mlp.bfc`)
      );
      x = x.add(this.dense(gelu(pre), this.v(`l${l}.mlp.wout`), this.v(`l${l}.mlp.bout`)));
    }
    x = this.layerNorm(x, this.v("lnf.g"), this.v("lnf.b"));
    return this.dense(x, this.v("tok_emb"), undefined, true);
  }

  /** Mean next-token cross-entropy in nats; padded targets (-1) are masked. */
  crossEntropy(batch: Batch): tf.Scalar {
    const ids = tf.tensor2d(batch.xs, undefined, "int32");
    const rawTargets = tf.tensor2d(batch.ys, undefined, "int32");
    const mask = rawTargets.greaterEqual(0).cast("float32");
    const targets = rawTargets.maximum(tf.scalar(0, "int32"));
    const logProbs = tf.logSoftmax(this.logits(ids), -1);
    const picked = tf
      .oneHot(targets, this.config.vocabSize)
      .mul(logProbs)
      .sum(-1)
      .mul(mask);
    return picked.sum().neg().div(mask.sum()) as tf.Scalar;
  }

  /** One optimizer step; returns the data cross-entropy (decay excluded). */
  trainStep(batch: Batch, optimizer: tf.Optimizer, weightDecay: number): number {
    let ce = 0;
    tf.tidy(() => {
      const varList = [...this.vars.values()];
      const { value, grads } = tf.variableGrads(() => {
        const dataLoss = this.crossEntropy(batch);
        ce = dataLoss.dataSync()[0];
        if (weightDecay <= 0) return dataLoss;
        let penalty = tf.scalar(0);
        for (const [name, variable] of this.vars) {
          if (name.includes(".w") || name.endsWith("_emb")) {
            penalty = penalty.add(variable.square().sum());
          }
        }
        return dataLoss.add(penalty.mul(weightDecay / 2)) as tf.Scalar;
      }, varList);
      optimizer.applyGradients(grads);
      value.dispose();
    });
    return ce;
  }

  evalLoss(batches: Batch[]): number {
    let total = 0;
    let count = 0;
    for (const batch of batches) {
      const n = batch.ys.flat().filter((y) => y >= 0).length;
      const ce = tf.tidy(() => this.crossEntropy(batch).dataSync()[0]);
      total += ce * n;
      count += n;
    }
    return total / count;
  }

  /** Log-probabilities over the vocabulary for the next token after `ids`. */
  nextLogProbs(ids: number[]): Float32Array {
    const window = ids.slice(-this.config.contextWindow);
    return tf.tidy(() => {
      const input = tf.tensor2d([window], undefined, "int32");
      const logits = this.logits(input);
      const last = logits.slice([0, window.length - 1, 0], [1, 1, this.config.vocabSize]);
      return tf.logSoftmax(last.reshape([this.config.vocabSize]), -1).dataSync() as Float32Array;
    });
  }

  snapshot(): Map<string, Float32Array> {
    const out = new Map<string, Float32Array>();
    for (const [name, variable] of this.vars) {
      out.set(name, variable.dataSync() as Float32Array);
    }
    return out;
  }

  restore(weights: Map<string, Float32Array>): void {
    for (const [name, variable] of this.vars) {
      const data = weights.get(name);
      if (!data) throw new Error(`checkpoint is missing weights for ${name}`);
      variable.assign(tf.tensor(data, variable.shape as number[]));
    }
  }

  dispose(): void {
    for (const variable of this.vars.values()) variable.dispose();
  }
}
