"""Recognition core: one-vs-rest LDA viseme bank, one-state-per-phoneme HMM
with Viterbi decoding, and lexicon-driven word assembly.

The HMM's states are phonemes; its observations are the per-frame viseme
score vectors produced by the LDA bank. Emissions factor through visemes:
the score of phoneme state ``p`` for observation ``o`` is
``sum_v emissions[p, v] * o[v]``, floored before entering log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import Lexicon, PhonemeAlphabet
from .storage import atomic_write_bytes, pack_container, read_container
from .validation import check_array_2d, check_labels, check_row_stochastic
from .visememap import VisemeMap

MODEL_MAGIC = b"LRM1"
EMISSION_FLOOR = 1e-10


class RecognizerError(ValueError):
    """Raised for invalid training data or model/feature mismatches."""


# ---------------------------------------------------------------------------
# LDA bank
# ---------------------------------------------------------------------------

class LdaVisemeBank(BaseEstimator):
    """One-vs-rest Fisher discriminant per viseme with softmax calibration.

    Each class direction solves ``(S_w + ridge * I) w = mu_class - mu_rest``
    with ``S_w`` the pooled within-class scatter; the bias puts the decision
    threshold at the midpoint of the projected class means. ``ridge=None``
    conditions the scatter with ``1e-3 * trace(S_w) / n_features``.
    """

    def __init__(self, ridge=None):
        self.ridge = ridge

    def fit(self, X, y, num_classes=None):
        X = check_array_2d(X, name="X")
        if num_classes is None:
            num_classes = int(np.max(y)) + 1 if len(y) else 0
        y = check_labels(y, num_classes, name="y")
        if X.shape[0] != y.shape[0]:
            raise RecognizerError(
                f"{X.shape[0]} feature frames but {y.shape[0]} labels"
            )
        counts = np.bincount(y, minlength=num_classes)
        empty = np.flatnonzero(counts < 2)
        if empty.size:
            raise RecognizerError(
                f"classes {empty.tolist()} have fewer than 2 training frames"
            )

        dim = X.shape[1]
        means = np.zeros((num_classes, dim))
        scatter = np.zeros((dim, dim))
        for c in range(num_classes):
            members = X[y == c]
            means[c] = members.mean(axis=0)
            centered = members - means[c]
            scatter += centered.T @ centered

        ridge = self.ridge
        if ridge is None:
            ridge = 1e-3 * np.trace(scatter) / dim
        if ridge < 0:
            raise RecognizerError("ridge must be nonnegative")
        conditioned = scatter + ridge * np.eye(dim)

        total = X.sum(axis=0)
        n = X.shape[0]
        directions = np.zeros((num_classes, dim))
        biases = np.zeros(num_classes)
        for c in range(num_classes):
            rest_count = n - counts[c]
            if rest_count == 0:
                raise RecognizerError("one-vs-rest needs at least 2 classes")
            mu_rest = (total - counts[c] * means[c]) / rest_count
            delta = means[c] - mu_rest
            try:
                w = np.linalg.solve(conditioned, delta)
            except np.linalg.LinAlgError:
                raise RecognizerError(
                    "within-class scatter is singular; set ridge > 0"
                ) from None
            norm = np.linalg.norm(w)
            if norm > 0:
                w = w / norm
            directions[c] = w
            biases[c] = w @ (means[c] + mu_rest) / 2.0

        self.directions_ = directions
        self.biases_ = biases
        self.num_classes_ = num_classes
        self.ridge_ = float(ridge)
        self.class_means_ = means
        return self

    def _check_fitted(self):
        if not hasattr(self, "directions_"):
            raise NotFittedError("LdaVisemeBank must be fitted first")

    def decision_function(self, X):
        """Signed margins per class; positive means the class side."""
        self._check_fitted()
        X = check_array_2d(X, name="X")
        if X.shape[1] != self.directions_.shape[1]:
            raise RecognizerError(
                f"feature dimension {X.shape[1]} does not match "
                f"fitted dimension {self.directions_.shape[1]}"
            )
        return X @ self.directions_.T - self.biases_

    def predict_proba(self, X):
        """Softmax over per-class margins; rows sum to 1."""
        margins = self.decision_function(X)
        margins = margins - margins.max(axis=1, keepdims=True)
        exp = np.exp(margins)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)


def viseme_scores(bank: LdaVisemeBank, features) -> np.ndarray:
    """Per-frame viseme probability vectors for a feature sequence."""
    return bank.predict_proba(features)


# ---------------------------------------------------------------------------
# HMM
# ---------------------------------------------------------------------------

class PhonemeHmm(BaseEstimator):
    """One-state-per-phoneme HMM estimated by smoothed counting.

    Transitions come from frame-bigram counts of the phoneme labels, the
    initial distribution from first-frame counts, and emissions from the
    co-occurrence of true phonemes with predicted visemes, all with add-alpha
    smoothing. With ``smoothing=0`` a phoneme with no outgoing bigrams keeps
    a self-loop of 1 and a phoneme never seen emits uniformly.
    """

    def __init__(self, smoothing=1.0, emission_floor=EMISSION_FLOOR):
        self.smoothing = smoothing
        self.emission_floor = emission_floor

    def fit(self, label_seqs, viseme_seqs, num_states, num_visemes):
        if self.smoothing < 0:
            raise RecognizerError("smoothing must be nonnegative")
        if not label_seqs:
            raise RecognizerError("no training sequences")
        if len(label_seqs) != len(viseme_seqs):
            raise RecognizerError("label and viseme sequence counts differ")

        alpha = float(self.smoothing)
        trans = np.zeros((num_states, num_states))
        init = np.zeros(num_states)
        emis = np.zeros((num_states, num_visemes))
        for labels, visemes in zip(label_seqs, viseme_seqs):
            labels = check_labels(labels, num_states, name="labels")
            visemes = check_labels(visemes, num_visemes, name="visemes")
            if labels.size != visemes.size:
                raise RecognizerError("label/viseme sequence length mismatch")
            if labels.size == 0:
                raise RecognizerError("empty training sequence")
            init[labels[0]] += 1
            np.add.at(trans, (labels[:-1], labels[1:]), 1)
            np.add.at(emis, (labels, visemes), 1)

        self.initial_ = _normalize_rows(init + alpha, self_loop=None)
        self.transitions_ = _normalize_rows(trans + alpha, self_loop=True)
        self.emissions_ = _normalize_rows(emis + alpha, self_loop=False)
        self.num_states_ = num_states
        self.num_visemes_ = num_visemes
        return self

    def decode(self, frame_scores):
        if not hasattr(self, "transitions_"):
            raise NotFittedError("PhonemeHmm must be fitted first")
        return viterbi_decode(
            self.initial_, self.transitions_, self.emissions_, frame_scores,
            emission_floor=self.emission_floor,
        )


def _normalize_rows(counts, self_loop):
    """Normalize count rows to distributions.

    Empty rows become a self-loop (square transition case), the uniform
    distribution (rectangular emission case), or stay forbidden (vector case
    handled by the caller via nonempty-input preconditions).
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 1:
        total = counts.sum()
        if total <= 0:
            raise RecognizerError("initial distribution has no mass")
        return counts / total
    out = np.zeros_like(counts)
    for r, row in enumerate(counts):
        total = row.sum()
        if total > 0:
            out[r] = row / total
        elif self_loop:
            out[r, r] = 1.0
        else:
            out[r] = 1.0 / counts.shape[1]
    return out


def train_hmm(label_seqs, viseme_seqs, num_states, num_visemes, smoothing=1.0):
    """Functional wrapper around :class:`PhonemeHmm`."""
    return PhonemeHmm(smoothing=smoothing).fit(
        label_seqs, viseme_seqs, num_states, num_visemes
    )


def viterbi_decode(initial, transitions, emissions, frame_scores,
                   emission_floor=EMISSION_FLOOR):
    """Most probable phoneme state path for a sequence of viseme scores.

    Maximizes ``log pi(s1) + sum log A(s_{t-1}, s_t) + sum log b(s_t, o_t)``
    with ``b(p, o) = sum_v E[p, v] o[v]`` floored at ``emission_floor``.
    Ties are broken toward the lowest state index at each backtrack step.
    Runs in O(T * S^2). Returns (path, log probability).
    """
    initial = check_row_stochastic(np.atleast_1d(initial), "initial")
    transitions = check_row_stochastic(transitions, "transitions")
    emissions = check_row_stochastic(emissions, "emissions")
    scores = check_array_2d(frame_scores, name="frame_scores")
    num_states = initial.shape[0]
    if transitions.shape != (num_states, num_states):
        raise RecognizerError("transition matrix shape mismatch")
    if emissions.shape[0] != num_states:
        raise RecognizerError("emission table must have one row per state")
    if scores.shape[0] == 0:
        raise RecognizerError("empty frame score sequence")
    if scores.shape[1] != emissions.shape[1]:
        raise RecognizerError(
            f"frame scores have {scores.shape[1]} visemes, "
            f"emission table has {emissions.shape[1]}"
        )

    with np.errstate(divide="ignore"):
        log_init = np.log(initial)
        log_trans = np.log(transitions)
        log_emit = np.log(np.maximum(scores @ emissions.T, emission_floor))

    num_frames = scores.shape[0]
    delta = log_init + log_emit[0]
    back = np.zeros((num_frames, num_states), dtype=np.int64)
    for t in range(1, num_frames):
        candidates = delta[:, None] + log_trans
        back[t] = np.argmax(candidates, axis=0)
        delta = candidates[back[t], np.arange(num_states)] + log_emit[t]

    last = int(np.argmax(delta))
    path = np.zeros(num_frames, dtype=np.int64)
    path[-1] = last
    for t in range(num_frames - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[last])


# ---------------------------------------------------------------------------
# word assembly
# ---------------------------------------------------------------------------

def collapse_frames(frame_labels, silence_index: int):
    """Collapse frame runs into phoneme tokens, dropping silence tokens."""
    tokens = []
    previous = None
    for label in frame_labels:
        label = int(label)
        if label != previous:
            if label != silence_index:
                tokens.append(label)
            previous = label
    return tokens


def _collapse_runs(seq):
    out = []
    for item in seq:
        if not out or out[-1] != item:
            out.append(item)
    return tuple(out)


def assemble_words(frame_labels, lexicon: Lexicon, alphabet: PhonemeAlphabet):
    """Turn a decoded phoneme frame sequence into a word sequence.

    Frames are collapsed to phoneme tokens (duplicates and silences removed),
    then segmented by dynamic programming minimizing first the number of
    unmatched phonemes, then the word count. Segments matching lexicon
    pronunciations emit words; unmatched phonemes emit nothing.
    """
    tokens = collapse_frames(frame_labels, alphabet.silence_index)
    if not tokens:
        return []

    # pronunciations with internal runs collapsed, since frame runs cannot
    # encode a doubled phoneme
    pronunciations = []
    for word in lexicon.words():
        pron = _collapse_runs(lexicon.pronunciation_indices(word))
        pronunciations.append((word, pron))

    n = len(tokens)
    inf = (n + 1, n + 1)
    cost = [inf] * (n + 1)
    choice = [None] * (n + 1)
    cost[n] = (0, 0)
    for i in range(n - 1, -1, -1):
        skip = (cost[i + 1][0] + 1, cost[i + 1][1])
        cost[i] = skip
        choice[i] = None
        for word, pron in pronunciations:
            end = i + len(pron)
            if end <= n and tuple(tokens[i:end]) == pron:
                candidate = (cost[end][0], cost[end][1] + 1)
                if candidate < cost[i]:
                    cost[i] = candidate
                    choice[i] = (word, end)

    words = []
    i = 0
    while i < n:
        if choice[i] is None:
            i += 1
        else:
            word, i = choice[i][0], choice[i][1]
            words.append(word)
    return words


# ---------------------------------------------------------------------------
# decoded utterances and the model container
# ---------------------------------------------------------------------------

@dataclass
class DecodedUtterance:
    """Decoder output for one utterance."""

    utterance_id: str
    frame_phonemes: np.ndarray
    frame_scores: np.ndarray
    words: list
    log_probability: float

    def __post_init__(self):
        if len(self.frame_phonemes) != len(self.frame_scores):
            raise RecognizerError("phoneme path and score lengths differ")


class VisemeRecognizer(BaseEstimator):
    """Full recognizer: LDA viseme bank feeding a phoneme HMM.

    ``fit`` takes per-utterance feature arrays and phoneme label arrays plus
    a viseme map; ``decode_utterance`` returns the phoneme path, scores, and
    assembled words for one feature sequence.
    """

    def __init__(self, viseme_map: VisemeMap = None, ridge=None, smoothing=1.0,
                 emission_floor=EMISSION_FLOOR):
        self.viseme_map = viseme_map
        self.ridge = ridge
        self.smoothing = smoothing
        self.emission_floor = emission_floor

    def fit(self, feature_seqs, label_seqs):
        if self.viseme_map is None:
            raise RecognizerError("viseme_map is required to fit the recognizer")
        vmap = self.viseme_map
        all_x = np.concatenate(list(feature_seqs))
        all_y = np.concatenate([np.asarray(l) for l in label_seqs])
        viseme_targets = vmap.apply(all_y)
        self.bank_ = LdaVisemeBank(ridge=self.ridge).fit(
            all_x, viseme_targets, num_classes=vmap.num_visemes
        )
        predicted = [self.bank_.predict(x) for x in feature_seqs]
        self.hmm_ = PhonemeHmm(
            smoothing=self.smoothing, emission_floor=self.emission_floor
        ).fit(label_seqs, predicted, vmap.num_phonemes, vmap.num_visemes)
        return self

    def decode_utterance(self, features, lexicon: Lexicon,
                         alphabet: PhonemeAlphabet, utterance_id="") -> DecodedUtterance:
        if not hasattr(self, "bank_"):
            raise NotFittedError("VisemeRecognizer must be fitted first")
        scores = self.bank_.predict_proba(features)
        path, logp = self.hmm_.decode(scores)
        words = assemble_words(path, lexicon, alphabet)
        return DecodedUtterance(utterance_id, path, scores, words, logp)


def save_model(path, bank: LdaVisemeBank, hmm: PhonemeHmm, viseme_map: VisemeMap,
               fingerprint: str, feature_fingerprint: str, metadata=None) -> None:
    """Write the versioned model container."""
    header = {
        "fingerprint": fingerprint,
        "feature_fingerprint": feature_fingerprint,
        "ridge": bank.ridge_,
        "smoothing": float(hmm.smoothing),
        "emission_floor": float(hmm.emission_floor),
        "num_visemes": int(viseme_map.num_visemes),
        "num_phonemes": int(viseme_map.num_phonemes),
        "merge_history": [[int(a), int(b)] for a, b in viseme_map.history],
        "metadata": metadata or {},
    }
    arrays = {
        "directions": bank.directions_,
        "biases": bank.biases_,
        "initial": hmm.initial_,
        "transitions": hmm.transitions_,
        "emissions": hmm.emissions_,
        "assignment": viseme_map.assignment,
    }
    atomic_write_bytes(path, pack_container(MODEL_MAGIC, header, arrays))


def load_model(path, expected_feature_fingerprint=None):
    """Load a model container; returns (bank, hmm, viseme_map, header).

    Raises if the stored feature fingerprint does not match the expected one.
    """
    header, arrays = read_container(path, MODEL_MAGIC)
    if (expected_feature_fingerprint is not None
            and header["feature_fingerprint"] != expected_feature_fingerprint):
        raise RecognizerError(
            "feature fingerprint mismatch: model was trained with "
            f"{header['feature_fingerprint']!r}, dataset has "
            f"{expected_feature_fingerprint!r}"
        )
    bank = LdaVisemeBank(ridge=header["ridge"])
    bank.directions_ = np.array(arrays["directions"], dtype=float)
    bank.biases_ = np.array(arrays["biases"], dtype=float)
    bank.num_classes_ = int(header["num_visemes"])
    bank.ridge_ = float(header["ridge"])
    hmm = PhonemeHmm(
        smoothing=header["smoothing"], emission_floor=header["emission_floor"]
    )
    hmm.initial_ = np.array(arrays["initial"], dtype=float)
    hmm.transitions_ = np.array(arrays["transitions"], dtype=float)
    hmm.emissions_ = np.array(arrays["emissions"], dtype=float)
    hmm.num_states_ = int(header["num_phonemes"])
    hmm.num_visemes_ = int(header["num_visemes"])
    vmap = VisemeMap(
        np.array(arrays["assignment"], dtype=np.int64),
        int(header["num_visemes"]),
        [tuple(pair) for pair in header["merge_history"]],
    )
    return bank, hmm, vmap, header
