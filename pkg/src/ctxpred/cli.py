"""Command-line surface: stage runner driven by a declarative JSON config.

Exit codes: 0 success, 1 stage failure (partial outputs of the failing stage
are removed), 2 config or schema violation.  All stages are deterministic
given the config's seeds, and a manifest of produced files with content
hashes is written at the end of every run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from . import corpus as corpus_mod
from . import gateway, measures, ngram, server, stats, substitution, synth
from .noisy import load_embeddings, load_feature_table, load_lexicon

STAGES = (
    "train-ngram",
    "augment",
    "score",
    "measures",
    "extract-frames",
    "features",
    "fit",
    "compare",
    "simulate",
)

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "out_dir", "stages"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
        "corpus": {"type": "string"},
        "stages": {"type": "array", "items": {"enum": list(STAGES)}, "minItems": 1},
        "strict": {"type": "boolean"},
        "lowercase": {"type": "boolean"},
        "backend": {"type": "string"},
        "cache": {"type": "string"},
        "jobs": {"type": "integer", "minimum": 1},
        "vocab": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "min_count": {"type": "integer", "minimum": 1},
                "include_speaker_tags": {"type": "boolean"},
            },
        },
        "ngram": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "order": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "include_unk": {"type": "boolean"},
            },
        },
        "augment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "swap_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "speaker_tags": {"type": "boolean"},
                "n_samples": {"type": "integer", "minimum": 1},
            },
        },
        "features": {
            "type": "object",
            "additionalProperties": False,
            "required": ["embeddings", "lexicon", "feature_table"],
            "properties": {
                "embeddings": {"type": "string"},
                "lexicon": {"type": "string"},
                "feature_table": {"type": "string"},
                "noise_var": {"type": "number", "minimum": 0},
                "policy": {"enum": ["skip", "strict"]},
                "category": {
                    "enum": ["semantic", "phonological", "mixed", "morphosyntactic"]
                },
            },
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "required": ["models"],
            "properties": {
                "input": {"type": "string"},
                "kind": {"enum": ["logistic", "ols", "lmm_ri"]},
                "response": {"type": "string"},
                "groups": {"type": "string"},
                "standardize": {"type": "boolean"},
                "add_intercept": {"type": "boolean"},
                "models": {
                    "type": "object",
                    "minProperties": 1,
                    "additionalProperties": {
                        "type": "array",
                        "items": {"type": "string"},
                    },
                },
            },
        },
        "compare": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pairs"],
            "properties": {
                "pairs": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "string"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                }
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_utts", "transition", "true_beta"],
            "properties": {
                "n_utts": {"type": "integer", "minimum": 1},
                "transition": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}},
                },
                "true_beta": {
                    "type": "object",
                    "additionalProperties": {"type": "number"},
                },
                "temperature": {"type": "number", "exclusiveMinimum": 0},
                "n_frames": {"type": "integer", "minimum": 1},
                "candidates": {"type": "array", "items": {"type": "string"}},
                "end_prob": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
    },
}


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def validate_config(cfg: dict) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: e.json_path)
    if errors:
        e = errors[0]
        raise ValueError(f"config schema violation at {e.json_path}: {e.message}")


def resolve_backend(spec: str, cache_path: str | None = None):
    """Parse a backend locator: ngram:<dir> | http(s)://<url> | stdio:<cmd>."""
    if spec.startswith("ngram:"):
        root = Path(spec[len("ngram:") :])
        fwd = ngram.load_model(root / "ngram_forward.json")
        bwd_path = root / "ngram_backward.json"
        bwd = ngram.load_model(bwd_path) if bwd_path.exists() else None
        return gateway.NgramBackend(fwd, bwd)
    if spec.startswith("http://") or spec.startswith("https://"):
        return gateway.HttpBackend(spec)
    if spec.startswith("http:"):
        return gateway.HttpBackend(spec[len("http:") :])
    if spec.startswith("stdio:"):
        return gateway.StdioBackend(shlex.split(spec[len("stdio:") :]))
    raise ValueError(f"unrecognized backend locator {spec!r}")


class PipelineContext:
    def __init__(self, cfg: dict, config_dir: Path):
        self.cfg = cfg
        self.config_dir = config_dir
        self.out_dir = self._path(cfg["out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "models").mkdir(exist_ok=True)
        (self.out_dir / "fits").mkdir(exist_ok=True)
        self.seed = int(cfg["seed"])
        self.produced: list[Path] = []
        self._corpus = None

    def _path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else (self.config_dir / path)

    def out(self, rel: str) -> Path:
        p = self.out_dir / rel
        self.produced.append(p)
        return p

    @property
    def corpus(self):
        if self._corpus is None:
            if "corpus" not in self.cfg:
                raise ValueError("config needs a 'corpus' path for this stage")
            self._corpus = corpus_mod.load_corpus(
                self._path(self.cfg["corpus"]),
                strict=self.cfg.get("strict", True),
                lowercase=self.cfg.get("lowercase", True),
            )
        return self._corpus

    def cache(self) -> gateway.ScoreCache | None:
        cache_path = self.cfg.get("cache") or os.environ.get("CTXPRED_CACHE_DIR")
        if not cache_path:
            return None
        p = Path(cache_path)
        if p.is_dir() or not p.suffix:
            p.mkdir(parents=True, exist_ok=True)
            p = p / "scores-cache.jsonl"
        return gateway.ScoreCache(p)

    def backend(self):
        spec = self.cfg.get("backend") or f"ngram:{self.out_dir / 'models'}"
        return resolve_backend(spec)

    def unigram(self) -> ngram.NGramModel:
        return ngram.load_model(self.out_dir / "models" / "ngram_unigram.json")


# --------------------------------------------------------------------------
# stages


def stage_train_ngram(ctx: PipelineContext) -> None:
    vc = ctx.cfg.get("vocab", {})
    nc = ctx.cfg.get("ngram", {})
    vocab = corpus_mod.build_vocab(
        ctx.corpus,
        min_count=vc.get("min_count", 1),
        include_speaker_tags=vc.get("include_speaker_tags", False),
    )
    order = nc.get("order", 2)
    alpha = nc.get("alpha", 1.0)
    include_unk = nc.get("include_unk", True)
    tags = vc.get("include_speaker_tags", False)
    for direction, name in (("forward", "ngram_forward"), ("backward", "ngram_backward")):
        model = ngram.train_ngram(
            ctx.corpus, order, alpha, direction, vocab=vocab,
            include_unk=include_unk, include_speaker_tags=tags,
        )
        ngram.save_model(model, ctx.out(f"models/{name}.json"))
    uni = ngram.train_ngram(
        ctx.corpus, 1, alpha, "forward", vocab=vocab,
        include_unk=include_unk, include_speaker_tags=tags,
    )
    ngram.save_model(uni, ctx.out("models/ngram_unigram.json"))
    vocab.save(ctx.out("models/vocab.json"))


def stage_augment(ctx: PipelineContext) -> None:
    ac = ctx.cfg.get("augment", {})
    records = aug.augment_corpus(
        ctx.corpus,
        seed=ctx.seed,
        swap_prob=ac.get("swap_prob", 0.5),
        include_speaker_tags=ac.get("speaker_tags", False),
        n_samples=ac.get("n_samples", 1),
    )
    aug.write_augmented(records, ctx.out("augmented.txt"))
    vc = ctx.cfg.get("vocab", {})
    vocab = corpus_mod.build_vocab(
        ctx.corpus,
        min_count=vc.get("min_count", 1),
        include_speaker_tags=ac.get("speaker_tags", False)
        or vc.get("include_speaker_tags", False),
    )
    vocab.save(ctx.out("vocab.json"))


def stage_score(ctx: PipelineContext) -> None:
    records, report = gateway.batch_score_corpus(
        ctx.backend(),
        ctx.corpus,
        ctx.unigram(),
        cache=ctx.cache(),
        jobs=ctx.cfg.get("jobs", 1),
    )
    gateway.write_records_csv(records, ctx.out("records.csv"))
    with open(ctx.out("score_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def stage_measures(ctx: PipelineContext) -> None:
    records = gateway.read_records_csv(ctx.out_dir / "records.csv")
    measures.write_scores_csv(records, ctx.out("scores.csv"))
    table = measures.scores_table(records)
    cols = ("logp_unigram", "logp_forward", "logp_backward", "uncond_pmi",
            "cond_pmi", "rel_backward")
    corr: dict[str, float] = {}
    for i, a in enumerate(cols):
        for b in cols[i + 1 :]:
            xs = [row[a] for row in table]
            ys = [row[b] for row in table]
            try:
                corr[f"{a}~{b}"] = measures.pearson(xs, ys)
            except ValueError:
                corr[f"{a}~{b}"] = None
    with open(ctx.out("correlations.json"), "w", encoding="utf-8") as fh:
        json.dump(corr, fh, indent=2, sort_keys=True)
        fh.write("\n")


def stage_extract_frames(ctx: PipelineContext) -> None:
    frames, report = substitution.extract_frames(ctx.corpus)
    substitution.write_frames_jsonl(frames, ctx.out("frames.jsonl"))
    with open(ctx.out("frames_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def stage_features(ctx: PipelineContext) -> None:
    fc = ctx.cfg["features"]
    frames = substitution.read_frames_jsonl(ctx.out_dir / "frames.jsonl")
    if fc.get("category"):
        frames = [f for f in frames if f.category == fc["category"]]
    vocab = corpus_mod.Vocabulary.load(ctx.out_dir / "models" / "vocab.json")
    embeddings = load_embeddings(ctx._path(fc["embeddings"]))
    lexicon = load_lexicon(ctx._path(fc["lexicon"]))
    table = load_feature_table(ctx._path(fc["feature_table"]))
    backend = ctx.backend()
    unigram = ctx.unigram()
    word_class = None
    rows: list[substitution.FeatureRow] = []
    reports = {}
    for frame in frames:
        frame_rows, report = substitution.assemble_rows(
            frame,
            vocab,
            backend,
            unigram,
            embeddings,
            lexicon,
            table,
            noise_var=fc.get("noise_var", 0.1),
            seed=ctx.seed,
            policy=fc.get("policy", "skip"),
            word_class=word_class,
        )
        rows.extend(frame_rows)
        if report["dropped_candidates"] or report["frame_dropped"]:
            reports[frame.frame_id] = report
    substitution.write_rows_csv(rows, ctx.out("rows.csv"))
    with open(ctx.out("features_report.json"), "w", encoding="utf-8") as fh:
        json.dump(reports, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fit_dataset(ctx: PipelineContext, fc: dict):
    import csv

    input_path = ctx._path(fc["input"]) if "input" in fc else ctx.out_dir / "rows.csv"
    with open(input_path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{input_path}: no data rows")
    return rows


def stage_fit(ctx: PipelineContext) -> None:
    fc = ctx.cfg["fit"]
    rows = _fit_dataset(ctx, fc)
    kind = fc.get("kind", "logistic")
    response = fc.get("response", "produced")
    y = np.array([float(r[response]) for r in rows])
    groups = (
        np.array([r[fc["groups"]] for r in rows]) if "groups" in fc else None
    )
    for name, columns in sorted(fc["models"].items()):
        X = np.column_stack([[float(r[c]) for r in rows] for c in columns])
        cols = list(columns)
        meta = {}
        if fc.get("standardize", True):
            X, meta = stats.standardize_columns(X, cols)
        if fc.get("add_intercept", True):
            X, cols = stats.add_intercept(X, cols)
        if kind == "logistic":
            fit = stats.fit_logistic(X, y, names=cols)
        elif kind == "ols":
            fit = stats.fit_ols(X, y, names=cols)
        else:
            if groups is None:
                raise ValueError("lmm_ri requires a 'groups' column")
            fit = stats.fit_lmm_random_intercept(X, y, groups, names=cols)
        fit.extras["standardized"] = {k: list(v) for k, v in meta.items()}
        fit.save(ctx.out(f"fits/fit_{name}.json"))


def stage_compare(ctx: PipelineContext) -> None:
    cc = ctx.cfg["compare"]
    results = []
    lines = []
    for small, big in cc["pairs"]:
        fs = stats.FitResult.load(ctx.out_dir / "fits" / f"fit_{small}.json")
        fb = stats.FitResult.load(ctx.out_dir / "fits" / f"fit_{big}.json")
        if fs.extras.get("standardized") != fb.extras.get("standardized"):
            common = set(fs.extras.get("standardized", {})) & set(
                fb.extras.get("standardized", {})
            )
            mismatched = [
                k
                for k in common
                if fs.extras["standardized"][k] != fb.extras["standardized"][k]
            ]
            if mismatched:
                raise ValueError(f"standardization mismatch on columns {mismatched}")
        cmp = stats.compare_fits(small, fs, big, fb)
        results.append(cmp)
        lines.append(
            f"{small} -> {big}: dLogLik={cmp['delta_loglik']:.3f} "
            f"chi2={cmp['chi2']:.3f} df={cmp['df']} p={cmp['p']:.3g} "
            f"dBIC={cmp['delta_bic']:.3f} preferred={cmp['preferred_by_bic']}"
        )
    with open(ctx.out("compare.json"), "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ctx.out("compare.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def stage_simulate(ctx: PipelineContext) -> None:
    sc = ctx.cfg["simulate"]
    corpus = synth.generate_markov_corpus(
        sc["n_utts"],
        sc["transition"],
        seed=ctx.seed,
        end_prob=sc.get("end_prob", 0.15),
    )
    corpus.save(ctx.out("sim_corpus.jsonl"))
    vocab = corpus_mod.build_vocab(corpus, min_count=1)
    uni = ngram.train_ngram(corpus, 1, 1.0, "forward", vocab=vocab)
    fwd = ngram.train_ngram(corpus, 2, 1.0, "forward", vocab=vocab)
    candidates = sc.get("candidates") or vocab.content_words()
    provider = synth.SimulatedFeatureProvider(candidates, unigram=uni, forward=fwd)
    policy = synth.SpeakerPolicy(
        true_beta=sc["true_beta"], temperature=sc.get("temperature", 1.0)
    )
    rows, truth = synth.simulate_substitutions(
        corpus, policy, provider, seed=ctx.seed, n_frames=sc.get("n_frames")
    )
    substitution.write_rows_csv(rows, ctx.out("sim_rows.csv"))
    with open(ctx.out("sim_truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")


_STAGE_FNS = {
    "train-ngram": stage_train_ngram,
    "augment": stage_augment,
    "score": stage_score,
    "measures": stage_measures,
    "extract-frames": stage_extract_frames,
    "features": stage_features,
    "fit": stage_fit,
    "compare": stage_compare,
    "simulate": stage_simulate,
}


def run_pipeline(config_path: str | Path) -> int:
    """Execute the stages requested by a config file; returns an exit code."""
    config_path = Path(config_path)
    try:
        cfg = json.loads(config_path.read_text(encoding="utf-8"))
        validate_config(cfg)
    except (OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    ctx = PipelineContext(cfg, config_path.resolve().parent)
    for stage in cfg["stages"]:
        before = len(ctx.produced)
        try:
            _STAGE_FNS[stage](ctx)
        except Exception as e:  # noqa: BLE001 - reported with the stage name
            for p in ctx.produced[before:]:
                if p.exists():
                    p.unlink()
            print(f"stage {stage!r} failed: {e}", file=sys.stderr)
            return 1
    manifest = {
        "seed": ctx.seed,
        "stages": list(cfg["stages"]),
        "files": {
            str(p.relative_to(ctx.out_dir)): _sha256(p)
            for p in sorted(set(ctx.produced))
            if p.exists()
        },
    }
    with open(ctx.out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


# --------------------------------------------------------------------------
# selfcheck


def selfcheck(verbose: bool = True) -> int:
    """Fast internal consistency battery over randomized toy models."""
    import math

    failures = 0

    def check(name: str, ok: bool) -> None:
        nonlocal failures
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        if not ok:
            failures += 1

    rng = np.random.default_rng(2024)
    for rep in range(5):
        size = int(rng.integers(3, 6))
        trans = rng.dirichlet(np.ones(size), size=size)
        corpus = synth.generate_markov_corpus(25, trans, seed=int(rng.integers(1 << 30)))
        model = ngram.train_ngram(corpus, 2, 0.5, "forward")
        ctx = list(corpus[0].tokens[:1])
        total = sum(math.exp(lp) for lp in ngram.forward_distribution(model, ctx).values())
        check(f"normalization (corpus {rep})", abs(total - 1.0) < 1e-9)
        utt = corpus[0]
        t = min(1, len(utt.tokens) - 1)
        lhs, rhs = measures.pmi_symmetry_check(model, utt, t)
        check(f"conditional-PMI identity (corpus {rep})", abs(lhs - rhs) < 1e-9)
        word = utt.tokens[0]
        diff = abs(
            ngram.infill_logprob(model, word, list(utt.tokens[:0]), [])
            - ngram.cond_logprob(model, word, [])
        )
        check(f"infill-forward consistency (corpus {rep})", diff == 0.0)
    x = rng.normal(size=(200, 3))
    y = (rng.random(200) < 1 / (1 + np.exp(-(x @ np.array([0.5, -0.5, 0.2]))))).astype(float)
    xi, cols = stats.add_intercept(x, ["fwd", "bwd", "other"])
    fit_a = stats.fit_logistic(xi, y, names=cols)
    xb = xi.copy()
    xb[:, 2] = xi[:, 2] - xi[:, 1]
    fit_b = stats.fit_logistic(xb, y, names=cols)
    check("reparameterization invariance", abs(fit_a.loglik - fit_b.loglik) < 1e-8)
    return 1 if failures else 0


# --------------------------------------------------------------------------
# argument parsing


def _single_stage_config(args: argparse.Namespace, stage: str, extra: dict) -> dict:
    cfg: dict = {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "stages": [stage],
    }
    if getattr(args, "corpus", None):
        cfg["corpus"] = args.corpus
    if getattr(args, "backend", None):
        cfg["backend"] = args.backend
    if getattr(args, "jobs", None):
        cfg["jobs"] = args.jobs
    cfg.update(extra)
    return cfg


def _run_single(cfg: dict) -> int:
    try:
        validate_config(cfg)
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    import tempfile

    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(cfg, fh)
        tmp = fh.name
    try:
        return run_pipeline(tmp)
    finally:
        os.unlink(tmp)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ctxpred",
        description="Past/future-context predictability pipeline over speech corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, corpus_required=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", required=True)
        if corpus_required:
            p.add_argument("--corpus", required=True)
        p.add_argument("--backend", default=None,
                       help="ngram:<dir> | http://<url> | stdio:<cmd>")
        p.add_argument("--jobs", type=int, default=None)

    p = sub.add_parser("run", help="run pipeline stages from a JSON config")
    p.add_argument("config")

    p = sub.add_parser("train-ngram", help="train forward/backward/unigram models")
    add_common(p)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--min-count", type=int, default=1)

    p = sub.add_parser("augment", help="write infill-augmented training text")
    add_common(p)
    p.add_argument("--swap-prob", type=float, default=0.5)
    p.add_argument("--speaker-tags", action="store_true")

    p = sub.add_parser("score", help="score every token with the backend")
    add_common(p)

    p = sub.add_parser("measures", help="derive measures and correlations from records.csv")
    add_common(p, corpus_required=False)

    p = sub.add_parser("extract-frames", help="extract substitution frames")
    add_common(p)

    p = sub.add_parser("features", help="assemble per-candidate regression rows")
    add_common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--feature-table", required=True)
    p.add_argument("--noise-var", type=float, default=0.1)
    p.add_argument("--policy", choices=["skip", "strict"], default="skip")
    p.add_argument("--category", default=None,
                   choices=["semantic", "phonological", "mixed", "morphosyntactic"])

    p = sub.add_parser("fit", help="fit regression models from a rows CSV")
    add_common(p, corpus_required=False)
    p.add_argument("--input", default=None)
    p.add_argument("--kind", choices=["logistic", "ols", "lmm_ri"], default="logistic")
    p.add_argument("--response", default="produced")
    p.add_argument("--groups", default=None)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument(
        "--model",
        action="append",
        required=True,
        metavar="NAME=COL1,COL2,...",
        help="may be given multiple times",
    )

    p = sub.add_parser("compare", help="likelihood-ratio and BIC comparisons")
    add_common(p, corpus_required=False)
    p.add_argument("--pair", action="append", required=True, metavar="SMALL:BIG")

    p = sub.add_parser("simulate", help="synthetic corpus + substitution rows")
    add_common(p, corpus_required=False)
    p.add_argument("--sim-config", required=True,
                   help="JSON with n_utts, transition, true_beta, temperature")

    p = sub.add_parser("selfcheck", help="run the internal consistency battery")

    p = sub.add_parser("serve", help="serve an n-gram backend over the wire protocol")
    p.add_argument("--backend", required=True, help="ngram:<dir>")
    p.add_argument("--stdio", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8777)

    args = parser.parse_args(argv)

    if args.command == "run":
        return run_pipeline(args.config)
    if args.command == "selfcheck":
        return selfcheck()
    if args.command == "serve":
        backend = resolve_backend(args.backend)
        if args.stdio:
            server.serve_stdio(backend)
            return 0
        print(f"serving on http://{args.host}:{args.port}/score", file=sys.stderr)
        server.serve_http(backend, args.host, args.port)
        return 0

    if args.command == "train-ngram":
        extra = {
            "vocab": {"min_count": args.min_count},
            "ngram": {"order": args.order, "alpha": args.alpha},
        }
        return _run_single(_single_stage_config(args, "train-ngram", extra))
    if args.command == "augment":
        extra = {
            "augment": {"swap_prob": args.swap_prob, "speaker_tags": args.speaker_tags}
        }
        return _run_single(_single_stage_config(args, "augment", extra))
    if args.command == "score":
        return _run_single(_single_stage_config(args, "score", {}))
    if args.command == "measures":
        return _run_single(_single_stage_config(args, "measures", {}))
    if args.command == "extract-frames":
        return _run_single(_single_stage_config(args, "extract-frames", {}))
    if args.command == "features":
        extra = {
            "features": {
                "embeddings": args.embeddings,
                "lexicon": args.lexicon,
                "feature_table": args.feature_table,
                "noise_var": args.noise_var,
                "policy": args.policy,
                **({"category": args.category} if args.category else {}),
            }
        }
        return _run_single(_single_stage_config(args, "features", extra))
    if args.command == "fit":
        models = {}
        for spec in args.model:
            name, _, cols = spec.partition("=")
            if not cols:
                print(f"--model must look like NAME=COL1,COL2 (got {spec!r})", file=sys.stderr)
                return 2
            models[name] = [c for c in cols.split(",") if c]
        extra = {
            "fit": {
                "models": models,
                "kind": args.kind,
                "response": args.response,
                "standardize": not args.no_standardize,
                **({"input": args.input} if args.input else {}),
                **({"groups": args.groups} if args.groups else {}),
            }
        }
        return _run_single(_single_stage_config(args, "fit", extra))
    if args.command == "compare":
        pairs = []
        for spec in args.pair:
            small, _, big = spec.partition(":")
            if not big:
                print(f"--pair must look like SMALL:BIG (got {spec!r})", file=sys.stderr)
                return 2
            pairs.append([small, big])
        return _run_single(_single_stage_config(args, "compare", {"compare": {"pairs": pairs}}))
    if args.command == "simulate":
        sim_cfg = json.loads(Path(args.sim_config).read_text(encoding="utf-8"))
        return _run_single(_single_stage_config(args, "simulate", {"simulate": sim_cfg}))
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
