"""Synthetic corpus generation with controllable viseme confusability.

Sentences are sampled from a fixed pool respecting the four word-count
levels (3-4, 5-6, 7-8, 8-12 words; sessions run 6+6+6+7 sentences across
them). Phoneme frame labels are expanded with a uniform duration law (vowels
drawn longer than consonants), silence is inserted between words, and each
frame's feature vector is drawn from the ground-truth cluster of its
phoneme's viseme group. Everything is derived from named seed streams, so a
given config always produces byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import (
    DEFAULT_FRAME_RATE,
    SAMPA_PHONEMES,
    SILENCE,
    VOWELS,
    Dataset,
    Lexicon,
    Participant,
    PhonemeAlphabet,
    Utterance,
    format_label_file,
    format_lexicon,
    manifest_document,
)
from .features import write_feature_file
from .storage import atomic_write_text

LEVEL_BANDS = {1: (3, 4), 2: (5, 6), 3: (7, 8), 4: (8, 12)}
LEVEL_SENTENCES = {1: 6, 2: 6, 3: 6, 4: 7}
SENTENCES_PER_SPEAKER = sum(LEVEL_SENTENCES.values())

# paper-famous indistinguishable groups, padded with singletons to 20 visemes
CONFUSABLE_GROUPS = (
    ("p", "b", "m"),
    ("t", "d", "n"),
    ("k", "g"),
    ("s", "z"),
    ("T", "D"),
    ("f", "B"),
    ("l", "L"),
    ("r", "4"),
    ("j", "jj"),
    ("N", "J"),
    ("tS",), ("x",), ("G",), ("w",),
    ("a",), ("e",), ("i",), ("o",), ("u",),
    (SILENCE,),
)


class SynthError(ValueError):
    """Raised for inconsistent synthetic corpus configuration."""


@dataclass
class SynthConfig:
    """Knobs for the synthetic corpus generator."""

    seed: int = 0
    speakers: int = 4
    pool_size: int = 500
    lexicon_size: int = 100
    word_length: tuple = (2, 5)
    feature_dim: int | None = None
    separation: float = 1.0
    spread: float = 0.25
    consonant_frames: tuple = (3, 15)
    vowel_frames: tuple = (6, 20)
    silence_frames: tuple = (2, 10)
    grouping: tuple | None = None
    train_fraction: float = 0.8
    include_participants: bool = True
    cohort_sizes: tuple = (9, 15)
    cohort_shift: float = 0.0
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        if self.spread <= 0:
            raise SynthError("spread must be positive")
        for name in ("consonant_frames", "vowel_frames", "silence_frames"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise SynthError(f"{name} must satisfy 1 <= min <= max")
        if self.speakers < 1 or self.pool_size < SENTENCES_PER_SPEAKER:
            raise SynthError("need at least one speaker and a pool of >= 25")

    def resolved_grouping(self, alphabet: PhonemeAlphabet):
        """Grouping as tuples of phoneme symbols, defaulting to singletons."""
        if self.grouping is None:
            return tuple((s,) for s in alphabet.symbols)
        groups = tuple(tuple(g) for g in self.grouping)
        seen = [s for g in groups for s in g]
        if sorted(seen) != sorted(alphabet.symbols):
            raise SynthError("grouping must partition the full alphabet")
        return groups


def separable_config(**overrides) -> SynthConfig:
    """Every phoneme its own well-separated cluster (separation 4x spread)."""
    base = SynthConfig(separation=1.0, spread=0.25, grouping=None)
    return replace(base, **overrides)


def confusable_config(**overrides) -> SynthConfig:
    """Visually indistinguishable groups share one cluster (20 clusters).

    The wider spread makes cluster overlap (and therefore word breakage)
    substantial while frame-level accuracy stays high, reproducing the
    phoneme-versus-word rate gap.
    """
    base = SynthConfig(separation=1.0, spread=0.6, grouping=CONFUSABLE_GROUPS)
    return replace(base, **overrides)


def _stream(seed, *key):
    return np.random.default_rng([int(seed)] + [int(k) for k in key])


def build_lexicon(config: SynthConfig, alphabet: PhonemeAlphabet) -> Lexicon:
    """Deterministic synthetic lexicon covering every non-silence phoneme.

    Words are dash-joined phoneme strings; pronunciations avoid internal
    immediate repeats (a frame sequence cannot encode a doubled phoneme).
    """
    rng = _stream(config.seed, 1)
    inventory = list(SAMPA_PHONEMES)
    vowels = sorted(VOWELS)
    entries = {}

    # coverage words first: every phoneme paired with a vowel
    for symbol in inventory:
        partner = vowels[len(entries) % len(vowels)]
        pron = (symbol, partner) if symbol != partner else (symbol, "l")
        entries["-".join(pron)] = pron

    lo, hi = config.word_length
    attempts = 0
    while len(entries) < config.lexicon_size:
        attempts += 1
        if attempts > 50 * config.lexicon_size:
            raise SynthError("could not generate enough unique words")
        length = int(rng.integers(lo, hi + 1))
        pron = []
        for _ in range(length):
            choices = [s for s in inventory if not pron or s != pron[-1]]
            pron.append(choices[int(rng.integers(len(choices)))])
        word = "-".join(pron)
        if word not in entries:
            entries[word] = tuple(pron)
    return Lexicon(entries, alphabet)


def _cluster_means(num_clusters, dim, separation, seed):
    if dim is None:
        dim = num_clusters
    if dim >= num_clusters:
        means = np.zeros((num_clusters, dim))
        means[np.arange(num_clusters), np.arange(num_clusters)] = separation
        return means
    rng = _stream(seed, 5)
    raw = rng.standard_normal((num_clusters, dim))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    return raw * separation


def _sentence_pool(config: SynthConfig, words):
    rng = _stream(config.seed, 2)
    pool = {level: [] for level in LEVEL_BANDS}
    for i in range(config.pool_size):
        level = (i % 4) + 1
        lo, hi = LEVEL_BANDS[level]
        count = int(rng.integers(lo, hi + 1))
        sentence = tuple(words[int(rng.integers(len(words)))] for _ in range(count))
        pool[level].append(sentence)
    return pool


def _expand_sentence(rng, sentence, lexicon, alphabet, config):
    """Frame labels for one sentence: phoneme durations plus silence gaps."""
    def duration(symbol):
        if symbol == SILENCE:
            lo, hi = config.silence_frames
        elif symbol in VOWELS:
            lo, hi = config.vowel_frames
        else:
            lo, hi = config.consonant_frames
        return int(rng.integers(lo, hi + 1))

    labels = [alphabet.silence_index] * duration(SILENCE)
    for w, word in enumerate(sentence):
        if w > 0:
            labels.extend([alphabet.silence_index] * duration(SILENCE))
        for symbol in lexicon.pronunciation(word):
            labels.extend([alphabet.index(symbol)] * duration(symbol))
    labels.extend([alphabet.silence_index] * duration(SILENCE))
    return np.asarray(labels, dtype=np.int64)


def _gen_participants(config: SynthConfig):
    rng = _stream(config.seed, 4)
    n_impaired, n_normal = config.cohort_sizes
    participants = []
    for cohort, count, shift in (
        ("hearing-impaired", n_impaired, config.cohort_shift),
        ("normal-hearing", n_normal, 0.0),
    ):
        for k in range(count):
            accuracies = {}
            for rep in (1, 2, 3):
                base = 0.45 + shift + 0.08 * (rep - 1)
                values = np.clip(
                    rng.normal(base, 0.15, SENTENCES_PER_SPEAKER), 0.0, 1.0
                )
                accuracies[rep] = [float(v) for v in values]
            prefix = "hi" if cohort == "hearing-impaired" else "nh"
            participants.append(
                Participant(f"{prefix}{k + 1:02d}", cohort, accuracies)
            )
    return participants


def gen_corpus(config: SynthConfig, out_dir, lexicon: Lexicon = None) -> Path:
    """Write a synthetic dataset (manifest, labels, features, lexicon).

    Returns the manifest path. Fully deterministic for a given config.
    """
    alphabet = PhonemeAlphabet()
    out_dir = Path(out_dir)
    if lexicon is None:
        lexicon = build_lexicon(config, alphabet)
    else:
        for word in lexicon.words():
            for symbol in lexicon.pronunciation(word):
                if symbol not in alphabet:
                    raise SynthError(f"lexicon phoneme {symbol!r} not in inventory")
                if symbol == SILENCE:
                    raise SynthError(
                        f"word {word!r} contains silence; silence separates "
                        "words and cannot appear inside a pronunciation"
                    )

    grouping = config.resolved_grouping(alphabet)
    cluster_of = np.zeros(len(alphabet), dtype=np.int64)
    for cluster_id, group in enumerate(grouping):
        for symbol in group:
            cluster_of[alphabet.index(symbol)] = cluster_id
    means = _cluster_means(
        len(grouping), config.feature_dim, config.separation, config.seed
    )
    dim = means.shape[1]

    words = lexicon.words()
    pool = _sentence_pool(config, words)

    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)

    utterances = []
    utt_index = 0
    for s in range(config.speakers):
        speaker = f"spk{s + 1:02d}"
        speaker_rng = _stream(config.seed, 3, s)
        sentence_no = 0
        for level in sorted(LEVEL_SENTENCES):
            bucket = pool[level]
            picks = speaker_rng.choice(
                len(bucket), size=LEVEL_SENTENCES[level], replace=False
            )
            for pick in picks:
                sentence = bucket[int(pick)]
                utt_id = f"{speaker}_s{sentence_no:02d}"
                frame_rng = _stream(config.seed, 100, utt_index)
                labels = _expand_sentence(
                    frame_rng, sentence, lexicon, alphabet, config
                )
                feats = (
                    means[cluster_of[labels]]
                    + config.spread * frame_rng.standard_normal((labels.size, dim))
                )
                label_rel = f"labels/{utt_id}.tsv"
                feature_rel = f"features/{utt_id}.lrf"
                atomic_write_text(
                    out_dir / label_rel, format_label_file(labels, alphabet)
                )
                write_feature_file(
                    out_dir / feature_rel,
                    feats.astype(np.float32),
                    layout=[{"name": "synthetic", "dim": dim, "kind": "external"}],
                )
                split = "test" if sentence_no % 5 == 4 else "train"
                utterances.append(
                    Utterance(
                        id=utt_id,
                        speaker_id=speaker,
                        level=level,
                        text=sentence,
                        frame_labels=labels,
                        frame_rate=config.frame_rate,
                        split=split,
                        label_path=label_rel,
                        feature_path=feature_rel,
                    )
                )
                sentence_no += 1
                utt_index += 1

    participants = _gen_participants(config) if config.include_participants else []
    dataset = Dataset(
        alphabet=alphabet,
        utterances=utterances,
        lexicon=lexicon,
        participants=participants,
        base_dir=out_dir,
    )
    atomic_write_text(out_dir / "lexicon.tsv", format_lexicon(lexicon))
    doc = manifest_document(
        dataset, "lexicon.tsv",
        extra={
            "synth": {
                "seed": config.seed,
                "speakers": config.speakers,
                "separation": config.separation,
                "spread": config.spread,
                "grouping": [list(g) for g in grouping],
                "feature_dim": dim,
            }
        },
    )
    manifest_path = out_dir / "manifest.json"
    atomic_write_text(
        manifest_path, json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )
    return manifest_path
