import { createHash } from "crypto";
import { readFileSync } from "fs";

export const UNK = "<unk>";
export const EOS = "<eos>";
export const PRE = "<PRE>";
export const SUF = "<SUF>";
export const MID = "<MID>";
export const SPECIALS = [UNK, EOS, PRE, SUF, MID];

export interface Vocab {
  words: string[];
  index: Map<string, number>;
  unkId: number;
  eosId: number;
  preId: number;
  sufId: number;
  midId: number;
  /** sha256 of the exported vocabulary file, for checkpoint/export identity */
  sha256: string;
}

/** Load the tokenizer vocabulary exported by the primary pipeline. */
export function loadVocab(path: string): Vocab {
  const raw = readFileSync(path);
  const payload = JSON.parse(raw.toString("utf-8"));
  if (payload.format !== "ctxpred-vocab") {
    throw new Error(`${path}: not a ctxpred vocabulary export`);
  }
  const words: string[] = payload.words;
  const index = new Map<string, number>();
  words.forEach((w, i) => index.set(w, i));
  for (const sp of SPECIALS) {
    if (!index.has(sp)) {
      throw new Error(`${path}: vocabulary is missing special token ${sp}`);
    }
  }
  return {
    words,
    index,
    unkId: index.get(UNK)!,
    eosId: index.get(EOS)!,
    preId: index.get(PRE)!,
    sufId: index.get(SUF)!,
    midId: index.get(MID)!,
    sha256: createHash("sha256").update(raw).digest("hex"),
  };
}

export function encode(vocab: Vocab, tokens: string[]): number[] {
  return tokens.map((t) => vocab.index.get(t) ?? vocab.unkId);
}

/** Encode without <unk> fallback; reports the offending tokens instead. */
export function encodeStrict(vocab: Vocab, tokens: string[]): number[] {
  const unknown = tokens.filter((t) => !vocab.index.has(t));
  if (unknown.length > 0) {
    throw new Error(`tokens not covered by the shared vocabulary: ${unknown.slice(0, 5).join(" ")}`);
  }
  return tokens.map((t) => vocab.index.get(t)!);
}
