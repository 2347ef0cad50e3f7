import math
from pathlib import Path

import numpy as np
import pytest

from ctxpred.corpus import (
    Corpus,
    DisfluencyRegion,
    EOS,
    Utterance,
    build_vocab,
    load_corpus,
)
from ctxpred.gateway import NgramBackend
from ctxpred.ngram import cond_logprob, infill_logprob, train_ngram
from ctxpred.noisy import (
    load_embeddings,
    load_feature_table,
    load_lexicon,
    semantic_distance,
)
from ctxpred.substitution import (
    SubstitutionFrame,
    assemble_rows,
    extract_frames,
    label_category,
    pos_to_lexical_class,
    read_frames_jsonl,
    read_rows_csv,
    write_frames_jsonl,
    write_rows_csv,
)

DATA = Path("src/ctxpred/data")


def _single(tokens, pos, regions):
    return Corpus((Utterance("c", "A", tokens, pos=pos, disfluencies=regions),))


class TestExtractFrames:
    def test_two_error_utterance_yields_two_frames(self, two_error_utterance):
        frames, report = extract_frames(Corpus((two_error_utterance,)))
        assert len(frames) == 2
        f1, f2 = frames
        assert (f1.error, f1.repair) == ("you", "we")
        assert f1.pre_context == ("it", "depends", "on", "whether")
        # the second error is already repaired in the first frame's context
        assert "aggressive" not in f1.post_context
        assert "aggression" in f1.post_context
        assert (f2.error, f2.repair) == ("aggressive", "aggression")
        assert f2.post_context == ("oriented", "military")
        assert "you" not in f2.pre_context and "we" in f2.pre_context
        # frame reconstructs a fluent utterance with the repair at the slot
        assert f1.fluent_tokens() == f2.fluent_tokens()

    def test_frame_count_tracks_errors_not_utterances(self, two_error_utterance):
        corpus = Corpus((two_error_utterance, two_error_utterance))
        frames, _ = extract_frames(corpus)
        assert len(frames) == 4

    def test_unequal_length_pair_excluded(self):
        corpus = _single(
            ["x", "very", "big", "small", "y"],
            ["NN", "RB", "JJ", "JJ", "NN"],
            [DisfluencyRegion("reparandum", 1, 3), DisfluencyRegion("repair", 3, 4, repair_of=0)],
        )
        frames, report = extract_frames(corpus)
        assert frames == []
        assert report["excluded_unequal_length"] == 1

    def test_equal_multiword_pair_excluded(self):
        corpus = _single(
            ["x", "really", "big", "very", "big", "y"],
            ["NN", "RB", "JJ", "RB", "JJ", "NN"],
            [DisfluencyRegion("reparandum", 1, 3), DisfluencyRegion("repair", 3, 5, repair_of=0)],
        )
        frames, report = extract_frames(corpus)
        assert frames == []
        assert report["excluded_multiword"] == 1

    def test_pos_mismatch_excluded(self):
        corpus = _single(
            ["the", "walk", "walked", "x"],
            ["DT", "NN", "VBD", "NN"],
            [DisfluencyRegion("reparandum", 1, 2), DisfluencyRegion("repair", 2, 3, repair_of=0)],
        )
        frames, report = extract_frames(corpus)
        assert frames == []
        assert report["excluded_pos_mismatch"] == 1

    def test_filled_pause_between_is_allowed(self):
        corpus = _single(
            ["we", "saw", "bird", "uh", "fish", "x"],
            ["PRP", "VBD", "NN", "UH", "NN", "NN"],
            [
                DisfluencyRegion("reparandum", 2, 3),
                DisfluencyRegion("filler", 3, 4),
                DisfluencyRegion("repair", 4, 5, repair_of=0),
            ],
        )
        frames, _ = extract_frames(corpus)
        assert len(frames) == 1
        assert frames[0].pre_context == ("we", "saw")
        assert frames[0].post_context == ("x",)

    def test_plain_intervening_material_disqualifies(self):
        corpus = _single(
            ["the", "bird", "really", "fish", "x"],
            ["DT", "NN", "RB", "NN", "NN"],
            [DisfluencyRegion("reparandum", 1, 2), DisfluencyRegion("repair", 3, 4, repair_of=0)],
        )
        frames, report = extract_frames(corpus)
        assert frames == []
        assert report["excluded_not_adjacent"] == 1

    def test_missing_pos_skipped_and_counted(self):
        corpus = Corpus(
            (
                Utterance(
                    "c",
                    "A",
                    ["a", "b", "c"],
                    disfluencies=[
                        DisfluencyRegion("reparandum", 0, 1),
                        DisfluencyRegion("repair", 1, 2, repair_of=0),
                    ],
                ),
            )
        )
        frames, report = extract_frames(corpus)
        assert frames == []
        assert report["skipped_missing_pos"] == 1

    def test_identical_error_and_repair_excluded(self):
        corpus = _single(
            ["a", "dog", "dog", "b"],
            ["DT", "NN", "NN", "NN"],
            [DisfluencyRegion("reparandum", 1, 2), DisfluencyRegion("repair", 2, 3, repair_of=0)],
        )
        frames, report = extract_frames(corpus)
        assert frames == []
        assert report["excluded_identical"] == 1

    def test_category_annotation_carried(self, two_error_utterance):
        frames, _ = extract_frames(Corpus((two_error_utterance,)))
        assert frames[0].category == "semantic"
        assert frames[1].category == "morphosyntactic"

    def test_bundled_toy_corpus_frames(self, toy_corpus_path):
        corpus = load_corpus(toy_corpus_path)
        frames, report = extract_frames(corpus)
        # 8 qualifying single-word frames; the multiword and pos-mismatch and
        # gap cases are excluded.
        assert report["n_frames"] == 8
        assert report["excluded_multiword"] == 1
        assert report["excluded_pos_mismatch"] == 1
        assert report["excluded_not_adjacent"] == 1
        two_error = [f for f in frames if f.utt_index == 27]
        assert len(two_error) == 2

    def test_frames_jsonl_roundtrip(self, toy_corpus_path, tmp_path):
        corpus = load_corpus(toy_corpus_path)
        frames, _ = extract_frames(corpus)
        path = tmp_path / "frames.jsonl"
        write_frames_jsonl(frames, path)
        assert read_frames_jsonl(path) == frames


@pytest.fixture(scope="module")
def pipeline_bits():
    corpus = load_corpus(DATA / "toy_corpus.jsonl")
    vocab = build_vocab(corpus, 1)
    fwd = train_ngram(corpus, 2, 1.0, "forward", vocab=vocab)
    bwd = train_ngram(corpus, 2, 1.0, "backward", vocab=vocab)
    uni = train_ngram(corpus, 1, 1.0, "forward", vocab=vocab)
    return {
        "corpus": corpus,
        "vocab": vocab,
        "backend": NgramBackend(fwd, bwd),
        "fwd": fwd,
        "bwd": bwd,
        "uni": uni,
        "emb": load_embeddings(DATA / "toy_embeddings.vec"),
        "lex": load_lexicon(DATA / "toy_lexicon.tsv"),
        "feats": load_feature_table(DATA / "phonetic_features.tsv"),
    }


@pytest.fixture
def toy_frame(pipeline_bits):
    frames, _ = extract_frames(pipeline_bits["corpus"])
    by_error = {f.error: f for f in frames}
    return by_error["dog"]  # "i really like my dog -> cat"


class TestAssembleRows:
    def test_structural_contract(self, pipeline_bits, toy_frame):
        b = pipeline_bits
        rows, report = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], b["emb"], b["lex"],
            b["feats"], noise_var=0.1, seed=3,
        )
        assert len(rows) == len(b["vocab"].content_words())
        produced = [r for r in rows if r.produced == 1]
        assert len(produced) == 1
        assert produced[0].candidate == toy_frame.error
        repair_row = [r for r in rows if r.candidate == toy_frame.repair][0]
        assert repair_row.produced == 0

    def test_repair_row_sem_dist_positive_under_noise(self, pipeline_bits, toy_frame):
        b = pipeline_bits
        rows, _ = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], b["emb"], b["lex"],
            b["feats"], noise_var=0.1, seed=3,
        )
        repair_row = [r for r in rows if r.candidate == toy_frame.repair][0]
        assert repair_row.sem_dist > 0.0

    def test_zero_noise_makes_repair_unique_zero_distance(self, pipeline_bits, toy_frame):
        b = pipeline_bits
        rows, _ = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], b["emb"], b["lex"],
            b["feats"], noise_var=0.0, seed=3,
        )
        zero_sem = [r.candidate for r in rows if r.sem_dist < 1e-12]
        assert zero_sem == [toy_frame.repair]
        repair_row = [r for r in rows if r.candidate == toy_frame.repair][0]
        assert repair_row.phon_dist == 0.0

    def test_feature_values_hand_checked(self, pipeline_bits, toy_frame):
        b = pipeline_bits
        rows, _ = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], b["emb"], b["lex"],
            b["feats"], noise_var=0.0, seed=3,
        )
        pre = list(toy_frame.pre_context)
        future = list(toy_frame.post_context)
        for r in rows[:6]:
            uni_lp = cond_logprob(b["uni"], r.candidate, [])
            fwd_lp = cond_logprob(b["fwd"], r.candidate, pre)
            bwd_lp = cond_logprob(b["bwd"], r.candidate, list(reversed(future)))
            bi_lp = infill_logprob(b["fwd"], r.candidate, pre, future + [EOS])
            assert r.logp_unigram == uni_lp
            assert r.logp_forward == fwd_lp
            assert r.uncond_pmi == pytest.approx(bwd_lp - uni_lp, abs=1e-12)
            assert r.cond_pmi == pytest.approx(bi_lp - fwd_lp, abs=1e-12)
            assert r.rel_backward == pytest.approx(bwd_lp - fwd_lp, abs=1e-12)
            assert r.sem_dist == pytest.approx(
                semantic_distance(b["emb"][toy_frame.repair], b["emb"][r.candidate]),
                abs=1e-12,
            )

    def test_noisy_target_shared_within_frame(self, pipeline_bits, toy_frame):
        # one noisy target per frame: rerunning with the same seed gives
        # identical distances for every candidate
        b = pipeline_bits
        rows1, _ = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], b["emb"], b["lex"],
            b["feats"], noise_var=0.1, seed=3,
        )
        rows2, _ = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], b["emb"], b["lex"],
            b["feats"], noise_var=0.1, seed=3,
        )
        assert rows1 == rows2

    def test_missing_candidate_skip_vs_strict(self, pipeline_bits, toy_frame, tmp_path):
        b = pipeline_bits
        # an embeddings file missing one candidate word
        missing_word = "yesterday"
        lines = [
            w + " " + " ".join("0.1" for _ in range(4))
            for w in b["emb"].vectors
            if w != missing_word
        ]
        p = tmp_path / "partial.vec"
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        partial = load_embeddings(p)
        rows, report = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], partial, b["lex"],
            b["feats"], noise_var=0.0, seed=3, policy="skip",
        )
        assert missing_word in report["dropped_candidates"]
        assert all(r.candidate != missing_word for r in rows)
        with pytest.raises(ValueError, match="missing"):
            assemble_rows(
                toy_frame, b["vocab"], b["backend"], b["uni"], partial, b["lex"],
                b["feats"], noise_var=0.0, seed=3, policy="strict",
            )

    def test_rows_csv_roundtrip(self, pipeline_bits, toy_frame, tmp_path):
        b = pipeline_bits
        rows, _ = assemble_rows(
            toy_frame, b["vocab"], b["backend"], b["uni"], b["emb"], b["lex"],
            b["feats"], noise_var=0.1, seed=3,
            word_class={w: "content" for w in b["vocab"].content_words()},
        )
        path = tmp_path / "rows.csv"
        write_rows_csv(rows, path)
        loaded = read_rows_csv(path)
        assert len(loaded) == len(rows)
        assert loaded[0].lexical_class == "content"
        assert loaded[3].cond_pmi == pytest.approx(rows[3].cond_pmi, rel=1e-11)


class TestCategoryHeuristic:
    def test_same_root_is_morphosyntactic(self):
        assert label_category("walking", "walked") == "morphosyntactic"

    def test_shared_onset_is_phonological(self):
        assert label_category("hat", "house") == "phonological"

    def test_unrelated_is_semantic(self):
        assert label_category("dog", "cat") == "semantic"

    def test_mixed_needs_embeddings(self, pipeline_bits):
        b = pipeline_bits
        # force two words close in embedding space and sharing a coda
        emb = type(b["emb"])(
            vectors={"walked": np.array([1.0, 0.0]), "talked": np.array([0.99, 0.01])},
            dim=2,
        )
        got = label_category("walked", "talked", lexicon=b["lex"], embeddings=emb)
        assert got == "mixed"


def test_pos_to_lexical_class():
    assert pos_to_lexical_class("NN") == "content"
    assert pos_to_lexical_class("VBD") == "content"
    assert pos_to_lexical_class("DT") == "function"
    assert pos_to_lexical_class("PRP$") == "function"
