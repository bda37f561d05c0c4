"""Corpus data model and I/O.

Covers the label space (31 Spanish SAMPA phonemes plus silence), utterances
with a phoneme label per frame, the pronunciation lexicon used for word
assembly, and participant records carrying per-sentence word accuracies.

File formats
------------
manifest        JSON: {"lexicon": path, "utterances": [...], "participants": [...]}
label file      ``frame_index<TAB>phoneme`` lines, frame_index counting up from 0
lexicon file    ``word<TAB>phoneme phoneme ...`` lines
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPA_PHONEMES = (
    "p", "b", "t", "d", "k", "g", "tS", "jj", "f", "B", "T", "D", "s", "z",
    "x", "G", "m", "n", "N", "J", "l", "L", "r", "4", "j", "w", "a", "e",
    "i", "o", "u",
)
SILENCE = "sil"
VOWELS = frozenset({"a", "e", "i", "o", "u"})
COHORTS = ("hearing-impaired", "normal-hearing")
LEVELS = (1, 2, 3, 4)
DEFAULT_FRAME_RATE = 50.0


class CorpusError(ValueError):
    """Raised for malformed corpus files or inconsistent metadata."""


class PhonemeAlphabet:
    """Ordered frame-label space: 31 SAMPA phonemes plus ``sil``.

    The symbol set is fixed; only the ordering may vary. The default
    ordering keeps the canonical SAMPA listing first and silence last.
    """

    def __init__(self, symbols=None):
        if symbols is None:
            symbols = SAMPA_PHONEMES + (SILENCE,)
        symbols = tuple(symbols)
        if len(symbols) != 32:
            raise CorpusError(f"alphabet must have 32 symbols, got {len(symbols)}")
        if len(set(symbols)) != len(symbols):
            raise CorpusError("alphabet symbols must be unique")
        if symbols.count(SILENCE) != 1:
            raise CorpusError("alphabet must contain 'sil' exactly once")
        if set(symbols) - {SILENCE} != set(SAMPA_PHONEMES):
            raise CorpusError("non-silence symbols must be the 31 SAMPA phonemes")
        self.symbols = symbols
        self._index = {s: i for i, s in enumerate(symbols)}

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, symbol):
        return symbol in self._index

    def __eq__(self, other):
        return isinstance(other, PhonemeAlphabet) and self.symbols == other.symbols

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise CorpusError(f"unknown phoneme {symbol!r}") from None

    def symbol(self, index: int) -> str:
        return self.symbols[index]

    @property
    def silence_index(self) -> int:
        return self._index[SILENCE]

    def vowel_indices(self):
        return [self._index[v] for v in sorted(VOWELS)]


@dataclass
class Utterance:
    """One recorded sentence: word sequence plus a phoneme label per frame."""

    id: str
    speaker_id: str
    level: int
    text: tuple
    frame_labels: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE
    split: str = "train"
    label_path: str | None = None
    feature_path: str | None = None

    def __post_init__(self):
        if self.level not in LEVELS:
            raise CorpusError(f"utterance {self.id}: level must be 1-4, got {self.level}")
        self.text = tuple(self.text)
        labels = np.asarray(self.frame_labels, dtype=np.int64)
        if labels.size == 0:
            raise CorpusError(f"utterance {self.id}: frame_labels is empty")
        if labels.min() < 0 or labels.max() >= 32:
            raise CorpusError(f"utterance {self.id}: frame label out of range")
        self.frame_labels = labels

    @property
    def num_frames(self) -> int:
        return int(self.frame_labels.size)


@dataclass
class Participant:
    """A human lip-reader with per-sentence word accuracies per repetition."""

    id: str
    cohort: str
    accuracies: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cohort not in COHORTS:
            raise CorpusError(
                f"participant {self.id}: cohort must be one of {COHORTS}"
            )
        cleaned = {}
        for rep, values in self.accuracies.items():
            rep = int(rep)
            if rep not in (1, 2, 3):
                raise CorpusError(
                    f"participant {self.id}: repetition must be 1-3, got {rep}"
                )
            values = [float(v) for v in values]
            if any(v < 0.0 or v > 1.0 for v in values):
                raise CorpusError(
                    f"participant {self.id}: accuracies must lie in [0, 1]"
                )
            cleaned[rep] = values
        self.accuracies = cleaned


class Lexicon:
    """Canonical word pronunciations over the phoneme alphabet."""

    def __init__(self, entries: dict, alphabet: PhonemeAlphabet):
        self.alphabet = alphabet
        self.entries = {}
        for word, phonemes in entries.items():
            phonemes = tuple(phonemes)
            if not phonemes:
                raise CorpusError(f"word {word!r} has an empty pronunciation")
            for p in phonemes:
                if p not in alphabet:
                    raise CorpusError(
                        f"word {word!r} uses unknown phoneme {p!r}"
                    )
            self.entries[word] = phonemes

    def __contains__(self, word):
        return word in self.entries

    def __len__(self):
        return len(self.entries)

    def pronunciation(self, word: str) -> tuple:
        try:
            return self.entries[word]
        except KeyError:
            raise CorpusError(f"word {word!r} not in lexicon") from None

    def pronunciation_indices(self, word: str) -> tuple:
        return tuple(self.alphabet.index(p) for p in self.pronunciation(word))

    def words(self):
        return sorted(self.entries)


@dataclass
class Dataset:
    """Loaded corpus handle: immutable once loaded, safe to share."""

    alphabet: PhonemeAlphabet
    utterances: list
    lexicon: Lexicon
    participants: list = field(default_factory=list)
    base_dir: Path | None = None
    lexicon_path: str = "lexicon.tsv"

    def __post_init__(self):
        self._by_id = {}
        for utt in self.utterances:
            if utt.id in self._by_id:
                raise CorpusError(f"duplicate utterance id {utt.id!r}")
            self._by_id[utt.id] = utt

    def __getitem__(self, utt_id: str) -> Utterance:
        return self._by_id[utt_id]

    def __len__(self):
        return len(self.utterances)

    def speakers(self):
        return sorted({u.speaker_id for u in self.utterances})

    def by_speaker(self, speaker_id: str):
        return [u for u in self.utterances if u.speaker_id == speaker_id]

    def by_split(self, split: str):
        return [u for u in self.utterances if u.split == split]

    def resolve(self, rel_path: str) -> Path:
        base = self.base_dir if self.base_dir is not None else Path(".")
        return base / rel_path


@dataclass
class AlignmentReport:
    """Outcome of checking frame labels against a feature frame count."""

    ok: bool
    delta: int
    reason: str = ""


def validate_alignment(frame_labels, feature_count: int) -> AlignmentReport:
    """Check that one feature frame exists per label frame.

    ``delta`` is feature_count minus label count.
    """
    n = len(frame_labels)
    if n == 0:
        return AlignmentReport(False, feature_count, "empty label sequence")
    if feature_count != n:
        return AlignmentReport(
            False, feature_count - n,
            f"{n} labels vs {feature_count} feature frames",
        )
    return AlignmentReport(True, 0)


def words_to_phonemes(text, lexicon: Lexicon):
    """Expand a word sequence into its phoneme string with word boundaries.

    Returns (phonemes, boundaries) where boundaries[i] is the index of the
    first phoneme of word i in the concatenated sequence.
    """
    phonemes = []
    boundaries = []
    for word in text:
        if word not in lexicon:
            raise CorpusError(f"out-of-vocabulary word {word!r}")
        boundaries.append(len(phonemes))
        phonemes.extend(lexicon.pronunciation(word))
    return phonemes, boundaries


# ---------------------------------------------------------------------------
# file readers / writers
# ---------------------------------------------------------------------------

def read_label_file(path, alphabet: PhonemeAlphabet) -> np.ndarray:
    """Read a ``frame_index<TAB>phoneme`` label file into an index array."""
    path = Path(path)
    labels = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(
                    f"{path}:{lineno}: expected 'frame<TAB>phoneme', got {line!r}"
                )
            idx_text, symbol = parts
            try:
                frame_idx = int(idx_text)
            except ValueError:
                raise CorpusError(
                    f"{path}:{lineno}: bad frame index {idx_text!r}"
                ) from None
            if frame_idx != len(labels):
                raise CorpusError(
                    f"{path}:{lineno}: frame index {frame_idx} out of order "
                    f"(expected {len(labels)})"
                )
            if symbol not in alphabet:
                raise CorpusError(
                    f"{path}:{lineno}: unknown phoneme {symbol!r}"
                )
            labels.append(alphabet.index(symbol))
    if not labels:
        raise CorpusError(f"{path}: empty label file")
    return np.asarray(labels, dtype=np.int64)


def format_label_file(frame_labels, alphabet: PhonemeAlphabet) -> str:
    lines = [
        f"{i}\t{alphabet.symbol(int(lab))}" for i, lab in enumerate(frame_labels)
    ]
    return "\n".join(lines) + "\n"


def read_lexicon(path, alphabet: PhonemeAlphabet) -> Lexicon:
    path = Path(path)
    entries = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(
                    f"{path}:{lineno}: expected 'word<TAB>phonemes', got {line!r}"
                )
            word, phoneme_text = parts
            phonemes = tuple(phoneme_text.split())
            for p in phonemes:
                if p not in alphabet:
                    raise CorpusError(
                        f"{path}:{lineno}: unknown phoneme {p!r} in word {word!r}"
                    )
            if not phonemes:
                raise CorpusError(f"{path}:{lineno}: empty pronunciation for {word!r}")
            if word in entries:
                raise CorpusError(f"{path}:{lineno}: duplicate word {word!r}")
            entries[word] = phonemes
    return Lexicon(entries, alphabet)


def format_lexicon(lexicon: Lexicon) -> str:
    lines = [
        f"{word}\t{' '.join(lexicon.entries[word])}" for word in lexicon.words()
    ]
    return "\n".join(lines) + "\n"


def load_manifest(path) -> Dataset:
    """Load a dataset manifest, resolving and reading all label files.

    Feature files are checked for existence but not read; they can be large
    and are consumed lazily by later stages.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: malformed JSON ({exc})") from None
    base = path.parent
    alphabet = PhonemeAlphabet(doc.get("alphabet"))

    lex_rel = doc.get("lexicon")
    if lex_rel is None:
        raise CorpusError(f"{path}: manifest is missing the 'lexicon' entry")
    lexicon = read_lexicon(base / lex_rel, alphabet)

    utterances = []
    for rec in doc.get("utterances", []):
        try:
            utt_id = rec["id"]
            label_rel = rec["label_path"]
        except KeyError as exc:
            raise CorpusError(f"{path}: utterance record missing {exc}") from None
        label_path = base / label_rel
        if not label_path.exists():
            raise CorpusError(f"{path}: label file not found: {label_path}")
        feature_rel = rec.get("feature_path")
        if feature_rel is not None and not (base / feature_rel).exists():
            raise CorpusError(
                f"{path}: feature file not found: {base / feature_rel}"
            )
        labels = read_label_file(label_path, alphabet)
        utterances.append(
            Utterance(
                id=utt_id,
                speaker_id=rec.get("speaker", "unknown"),
                level=int(rec.get("level", 1)),
                text=tuple(rec.get("text", [])),
                frame_labels=labels,
                frame_rate=float(rec.get("frame_rate", DEFAULT_FRAME_RATE)),
                split=rec.get("split", "train"),
                label_path=label_rel,
                feature_path=feature_rel,
            )
        )

    participants = [
        Participant(
            id=rec["id"],
            cohort=rec["cohort"],
            accuracies={int(k): v for k, v in rec.get("accuracies", {}).items()},
        )
        for rec in doc.get("participants", [])
    ]
    return Dataset(
        alphabet=alphabet,
        utterances=utterances,
        lexicon=lexicon,
        participants=participants,
        base_dir=base,
        lexicon_path=lex_rel,
    )


def manifest_document(dataset: Dataset, lexicon_path: str, extra: dict | None = None) -> dict:
    """Build the JSON manifest document for a dataset."""
    doc = {
        "alphabet": list(dataset.alphabet.symbols),
        "lexicon": lexicon_path,
        "utterances": [
            {
                "id": u.id,
                "speaker": u.speaker_id,
                "level": u.level,
                "text": list(u.text),
                "frame_rate": u.frame_rate,
                "split": u.split,
                "label_path": u.label_path,
                "feature_path": u.feature_path,
            }
            for u in dataset.utterances
        ],
        "participants": [
            {
                "id": p.id,
                "cohort": p.cohort,
                "accuracies": {str(k): v for k, v in sorted(p.accuracies.items())},
            }
            for p in dataset.participants
        ],
    }
    if extra:
        doc.update(extra)
    return doc


def labels_from_intervals(intervals, frame_rate, alphabet: PhonemeAlphabet,
                          n_frames=None) -> np.ndarray:
    """Convert an interval tier ``(t_start, t_end, phoneme)`` to frame labels.

    A frame belongs to the interval containing its midpoint time; frames
    outside every interval are silence.
    """
    intervals = [(float(a), float(b), s) for a, b, s in intervals]
    for a, b, s in intervals:
        if b <= a:
            raise CorpusError(f"interval ({a}, {b}, {s!r}) has non-positive length")
        if s not in alphabet:
            raise CorpusError(f"unknown phoneme {s!r} in interval tier")
    if n_frames is None:
        t_max = max((b for _, b, _ in intervals), default=0.0)
        n_frames = int(round(t_max * frame_rate))
    if n_frames <= 0:
        raise CorpusError("interval tier yields no frames")
    labels = np.full(n_frames, alphabet.silence_index, dtype=np.int64)
    for a, b, symbol in intervals:
        idx = alphabet.index(symbol)
        for t in range(n_frames):
            mid = (t + 0.5) / frame_rate
            if a <= mid < b:
                labels[t] = idx
    return labels
