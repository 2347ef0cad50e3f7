import { readFileSync } from "fs";
import { EOS, Vocab, encodeStrict } from "./vocab";

export interface Batch {
  /** [B][T] input ids, right-padded */
  xs: number[][];
  /** [B][T] next-token targets, -1 on padded positions */
  ys: number[][];
}

/**
 * Load a sequence file: one space-separated token sequence per line.  This is
 * the augmented-corpus format the primary pipeline emits; plain utterance
 * files work too (an <eos> terminator is appended when missing).
 */
export function loadSequences(path: string, vocab: Vocab, contextWindow: number): number[][] {
  const lines = readFileSync(path, "utf-8").split("\n");
  const sequences: number[][] = [];
  for (const line of lines) {
    const tokens = line.trim().split(/\s+/).filter((t) => t.length > 0);
    if (tokens.length === 0) continue;
    if (tokens[tokens.length - 1] !== EOS) tokens.push(EOS);
    sequences.push(encodeStrict(vocab, tokens).slice(0, contextWindow + 1));
  }
  if (sequences.length === 0) throw new Error(`${path}: no training sequences`);
  return sequences;
}

/** Deterministic shuffle (mulberry32) so runs are reproducible given the seed. */
export function shuffled<T>(items: T[], seed: number): T[] {
  let a = seed >>> 0;
  const rand = () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

export function splitTrainVal<T>(items: T[], valFraction: number, seed: number): [T[], T[]] {
  const mixed = shuffled(items, seed);
  const nVal = Math.max(1, Math.floor(items.length * valFraction));
  if (items.length < 2) return [mixed, mixed];
  return [mixed.slice(nVal), mixed.slice(0, nVal)];
}

/** Group sequences into padded next-token batches. */
export function makeBatches(sequences: number[][], batchSize: number): Batch[] {
  const batches: Batch[] = [];
  for (let i = 0; i < sequences.length; i += batchSize) {
    const group = sequences.slice(i, i + batchSize);
    const maxLen = Math.max(...group.map((s) => s.length));
    const xs: number[][] = [];
    const ys: number[][] = [];
    for (const seq of group) {
      const x: number[] = [];
      const y: number[] = [];
      for (let t = 0; t < maxLen - 1; t++) {
        if (t + 1 < seq.length) {
          x.push(seq[t]);
          y.push(seq[t + 1]);
        } else {
          x.push(0);
          y.push(-1);
        }
      }
      xs.push(x);
      ys.push(y);
    }
    batches.push({ xs, ys });
  }
  return batches;
}
