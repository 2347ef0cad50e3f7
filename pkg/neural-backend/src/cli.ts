import { loadCheckpoint, saveCheckpoint } from "./checkpoint";
import { createApp } from "./server";
import { DEFAULT_TRAIN_CONFIG, TrainConfig, train } from "./train";
import { loadVocab } from "./vocab";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${argv[i]}`);
    }
    flags.set(argv[i].slice(2), argv[i + 1]);
  }
  return flags;
}

function usage(): never {
  console.error(
    [
      "usage:",
      "  cli train --data augmented.txt --vocab vocab.json --out model.ckpt.json [--lr R]",
      "            [--batch-size N] [--epochs N] [--context N] [--dim N] [--layers N]",
      "            [--heads N] [--seed N] [--weight-decay R]",
      "  cli serve --checkpoint model.ckpt.json [--port 8777] [--host 127.0.0.1]",
    ].join("\n")
  );
  process.exit(2);
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "train") {
    const flags = parseFlags(rest);
    const data = flags.get("data");
    const vocab = flags.get("vocab");
    const out = flags.get("out");
    if (!data || !vocab || !out) usage();
    const overrides: Partial<TrainConfig> = {};
    const num = (flag: string, key: keyof TrainConfig) => {
      if (flags.has(flag)) (overrides as Record<string, number>)[key] = Number(flags.get(flag));
    };
    num("lr", "learningRate");
    num("batch-size", "batchSize");
    num("epochs", "epochs");
    num("context", "contextWindow");
    num("dim", "dim");
    num("layers", "nLayers");
    num("heads", "nHeads");
    num("seed", "seed");
    num("weight-decay", "weightDecay");
    const result = train(data, vocab, overrides, (log) =>
      console.error(
        `epoch ${log.epoch}: train ${log.trainLoss.toFixed(4)} val ${log.valLoss.toFixed(4)}`
      )
    );
    saveCheckpoint(out, result.model, result.vocab.sha256, result.log);
    console.error(`saved ${out}${result.stoppedEarly ? " (early stopping)" : ""}`);
    return;
  }
  if (command === "serve") {
    const flags = parseFlags(rest);
    const ckptPath = flags.get("checkpoint");
    if (!ckptPath) usage();
    const port = Number(flags.get("port") ?? 8777);
    const host = flags.get("host") ?? "127.0.0.1";
    const ckpt = loadCheckpoint(ckptPath);
    if (flags.has("vocab")) {
      const vocab = loadVocab(flags.get("vocab")!);
      if (vocab.sha256 !== ckpt.vocabSha256) {
        throw new Error("vocabulary file does not match the checkpoint's tokenizer export");
      }
    }
    // the checkpoint does not embed words, so a vocab file is required to serve
    const vocabPath = flags.get("vocab");
    if (!vocabPath) {
      console.error("serve requires --vocab (the primary tokenizer export)");
      process.exit(2);
    }
    const vocab = loadVocab(vocabPath);
    const app = createApp(ckpt.model, vocab, ckpt.modelId);
    app.listen(port, host, () => {
      console.error(`scoring server on http://${host}:${port}/score (${ckpt.modelId})`);
    });
    return;
  }
  usage();
}

main();
