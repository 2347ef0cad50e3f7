import pytest

from ctxpred.corpus import Corpus, DisfluencyRegion, Utterance

DATA_DIR = "src/ctxpred/data"


@pytest.fixture
def tiny_corpus():
    """The two-utterance hand-countable corpus: "a b" and "a c"."""
    return Corpus(
        (
            Utterance("c1", "A", ["a", "b"]),
            Utterance("c1", "B", ["a", "c"]),
        )
    )


@pytest.fixture
def two_error_utterance():
    """A two-substitution utterance with a repeated-word interregnum on the
    first pair, mirroring the multi-error preprocessing example."""
    tokens = (
        "it depends on whether you whether we figure that we have a defense "
        "oriented military or an aggressive aggression oriented military"
    ).split()
    pos = [
        "PRP", "VBZ", "IN", "IN", "PRP", "IN", "PRP", "VBP", "IN", "PRP",
        "VBP", "DT", "NN", "JJ", "NN", "CC", "DT", "JJ", "JJ", "JJ", "NN",
    ]
    regions = (
        DisfluencyRegion("reparandum", 4, 5, category="semantic"),
        DisfluencyRegion("repetition", 5, 6),
        DisfluencyRegion("repair", 6, 7, repair_of=0),
        DisfluencyRegion("reparandum", 17, 18, category="morphosyntactic"),
        DisfluencyRegion("repair", 18, 19, repair_of=3),
    )
    return Utterance("sw1", "A", tokens, pos=pos, disfluencies=regions)


@pytest.fixture
def toy_corpus_path():
    return f"{DATA_DIR}/toy_corpus.jsonl"
