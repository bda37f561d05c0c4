"""Continuous visual speech recognition at desk scale.

Appearance features from mouth ROIs, a confusion-driven phoneme-to-viseme
map, an LDA viseme bank feeding a one-state-per-phoneme HMM, lexicon word
assembly, and the evaluation/statistics machinery to score it all.
"""

from .corpus import (
    Dataset,
    Lexicon,
    Participant,
    PhonemeAlphabet,
    Utterance,
    load_manifest,
    validate_alignment,
    words_to_phonemes,
)
from .evaluation import (
    cohort_compare,
    cumulative_curve,
    frame_phoneme_rate,
    participant_word_accuracy,
    phoneme_prf,
    rank_sum_test,
    signed_rank_test,
    t_test_unpaired,
    word_recognition_rate,
)
from .features import (
    DctFeaturizer,
    EarlyFusion,
    dct2d,
    idct2d,
    normalize_roi,
    select_coefficients,
    temporal_stack,
)
from .oracles import brute_force_viterbi, closed_form_lda_2class, permutation_pvalue
from .recognizer import (
    LdaVisemeBank,
    PhonemeHmm,
    VisemeRecognizer,
    assemble_words,
    viterbi_decode,
)
from .synth import SynthConfig, confusable_config, gen_corpus, separable_config
from .visememap import (
    VisemeMap,
    VisemeMapper,
    ambiguity_score,
    build_viseme_map,
    confusion_matrix,
    merge_step,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DctFeaturizer",
    "EarlyFusion",
    "LdaVisemeBank",
    "Lexicon",
    "Participant",
    "PhonemeAlphabet",
    "PhonemeHmm",
    "SynthConfig",
    "Utterance",
    "VisemeMap",
    "VisemeMapper",
    "VisemeRecognizer",
    "ambiguity_score",
    "assemble_words",
    "brute_force_viterbi",
    "build_viseme_map",
    "closed_form_lda_2class",
    "cohort_compare",
    "confusable_config",
    "confusion_matrix",
    "cumulative_curve",
    "dct2d",
    "frame_phoneme_rate",
    "gen_corpus",
    "idct2d",
    "load_manifest",
    "merge_step",
    "normalize_roi",
    "participant_word_accuracy",
    "permutation_pvalue",
    "phoneme_prf",
    "rank_sum_test",
    "select_coefficients",
    "separable_config",
    "signed_rank_test",
    "t_test_unpaired",
    "temporal_stack",
    "validate_alignment",
    "viterbi_decode",
    "word_recognition_rate",
    "words_to_phonemes",
]
