"""Past- and future-context predictability toolkit for speech corpora."""

__version__ = "0.1.0"

from .augment import AugmentedRecord, augment_corpus, make_infill_query, write_augmented
from .corpus import (
    Corpus,
    CorpusFormatError,
    DisfluencyRegion,
    Utterance,
    Vocabulary,
    build_vocab,
    load_corpus,
)
from .gateway import (
    HttpBackend,
    NgramBackend,
    PredictabilityRecord,
    ProtocolError,
    ScoreCache,
    StdioBackend,
    TransportError,
    batch_score_corpus,
    score_backward,
    score_forward,
    score_infill,
)
from .measures import MeasureSet, compute_measures, pearson, pmi_symmetry_check
from .ngram import (
    NGramModel,
    cond_logprob,
    forward_distribution,
    infill_distribution,
    infill_logprob,
    load_model,
    perplexity,
    save_model,
    train_ngram,
)
from .noisy import (
    EmbeddingTable,
    PhoneticFeatureTable,
    PronLexicon,
    load_embeddings,
    load_feature_table,
    load_lexicon,
    noisy_phonetic_target,
    noisy_semantic_target,
    phonetic_distance,
    semantic_distance,
)
from .stats import (
    BootstrapResult,
    FitResult,
    RankDeficiencyError,
    SeparationError,
    bic,
    bootstrap_ci,
    compare_fits,
    fit_lmm_random_intercept,
    fit_logistic,
    fit_ols,
    lrt,
)
from .substitution import (
    FeatureRow,
    SubstitutionFrame,
    assemble_rows,
    extract_frames,
    label_category,
)
from .synth import (
    SimulatedFeatureProvider,
    SpeakerPolicy,
    generate_markov_corpus,
    simulate_substitutions,
)
