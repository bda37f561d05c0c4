"""Phoneme-to-viseme mapping by greedy confusion merging.

A frame-level phoneme classifier is trained on part of the data, its
confusion matrix is computed on a held-out split, and the most mutually
confusable class pair is merged repeatedly until the target viseme count is
reached. Merging aggregates the confusion matrix rather than retraining; a
retrain-each-step variant is available for the expensive interpretation.

Map file format: ``phoneme<TAB>viseme_id`` lines followed by a history
trailer of ``merge<TAB>i<TAB>j`` lines (i, j are phoneme indices of the
merged groups' smallest members). Comment lines start with ``#``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import PhonemeAlphabet
from .storage import atomic_write_text
from .validation import check_equal_length, check_labels


class VisemeMapError(ValueError):
    """Raised for invalid confusion matrices or merge requests."""


def confusion_matrix(true_labels, predicted_labels, num_classes: int) -> np.ndarray:
    """Frame confusion counts; rows are true classes, columns predictions."""
    check_equal_length(true_labels, predicted_labels)
    true = check_labels(true_labels, num_classes, name="true_labels")
    pred = check_labels(predicted_labels, num_classes, name="predicted_labels")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return counts


def ambiguity_score(counts, i: int, j: int) -> float:
    """Symmetrized row-normalized confusion between classes i and j.

    Rows with no frames contribute 0, so unseen classes never look ambiguous.
    """
    if i == j:
        raise VisemeMapError("ambiguity is defined for distinct classes")
    counts = np.asarray(counts)
    row_i = counts[i].sum()
    row_j = counts[j].sum()
    score = 0.0
    if row_i > 0:
        score += counts[i, j] / row_i
    if row_j > 0:
        score += counts[j, i] / row_j
    return float(score)


def most_ambiguous_pair(counts) -> tuple[int, int]:
    """Class pair with maximal ambiguity; ties go to the lowest index pair."""
    c = counts.shape[0]
    best = (0, 1)
    best_score = -1.0
    for i in range(c):
        for j in range(i + 1, c):
            score = ambiguity_score(counts, i, j)
            if score > best_score:
                best_score = score
                best = (i, j)
    return best


def merge_step(counts) -> tuple[np.ndarray, tuple[int, int]]:
    """Merge the most ambiguous pair, summing its rows and columns.

    The merged class keeps the lower index; the higher index disappears.
    Returns the reduced matrix and the merged (i, j) pair.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise VisemeMapError(f"confusion matrix must be square, got {counts.shape}")
    if counts.shape[0] < 2:
        raise VisemeMapError("cannot merge a matrix with fewer than 2 classes")
    if np.any(counts < 0):
        raise VisemeMapError("confusion counts must be nonnegative")
    i, j = most_ambiguous_pair(counts)
    merged = counts.copy()
    merged[i, :] += merged[j, :]
    merged[:, i] += merged[:, j]
    merged = np.delete(np.delete(merged, j, axis=0), j, axis=1)
    return merged, (i, j)


def greedy_merge(counts, target: int):
    """Run merge steps until ``target`` classes remain.

    Returns (groups, history, merged_counts) where groups lists the original
    class indices in each surviving class (ordered by smallest member) and
    history records each merge as a pair of smallest-member class indices.
    """
    counts = np.asarray(counts, dtype=np.int64)
    num_classes = counts.shape[0]
    if not 1 <= target <= num_classes:
        raise VisemeMapError(
            f"target classes must lie in [1, {num_classes}], got {target}"
        )
    groups = [[k] for k in range(num_classes)]
    history = []
    current = counts
    while len(groups) > target:
        current, (i, j) = merge_step(current)
        history.append((groups[i][0], groups[j][0]))
        groups[i] = sorted(groups[i] + groups[j])
        del groups[j]
    return groups, history, current


@dataclass
class VisemeMap:
    """Surjective phoneme-index to viseme-index assignment with its history."""

    assignment: np.ndarray
    num_visemes: int
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        used = np.unique(self.assignment)
        expected = np.arange(self.num_visemes)
        if used.size != self.num_visemes or not np.array_equal(used, expected):
            raise VisemeMapError(
                f"assignment must map onto 0..{self.num_visemes - 1}"
            )
        self.history = [(int(a), int(b)) for a, b in self.history]

    @property
    def num_phonemes(self) -> int:
        return int(self.assignment.size)

    @classmethod
    def identity(cls, num_phonemes: int) -> "VisemeMap":
        return cls(np.arange(num_phonemes), num_phonemes, [])

    @classmethod
    def from_history(cls, num_phonemes: int, history) -> "VisemeMap":
        """Replay merge history from the identity map (union of groups)."""
        groups = [[k] for k in range(num_phonemes)]
        for a, b in history:
            ga = next(g for g in groups if a in g)
            gb = next(g for g in groups if b in g)
            if ga is gb:
                raise VisemeMapError(f"history merges {a} and {b} twice")
            ga.extend(gb)
            ga.sort()
            groups.remove(gb)
        return cls.from_groups(num_phonemes, groups, history)

    @classmethod
    def from_groups(cls, num_phonemes: int, groups, history=()) -> "VisemeMap":
        groups = sorted((sorted(g) for g in groups), key=lambda g: g[0])
        assignment = np.full(num_phonemes, -1, dtype=np.int64)
        for viseme_id, group in enumerate(groups):
            for phoneme in group:
                if assignment[phoneme] != -1:
                    raise VisemeMapError(f"phoneme {phoneme} in two groups")
                assignment[phoneme] = viseme_id
        if np.any(assignment < 0):
            raise VisemeMapError("groups do not cover all phonemes")
        return cls(assignment, len(groups), list(history))

    def groups(self):
        out = [[] for _ in range(self.num_visemes)]
        for phoneme, viseme in enumerate(self.assignment):
            out[viseme].append(phoneme)
        return out

    def apply(self, phoneme_labels) -> np.ndarray:
        labels = check_labels(phoneme_labels, self.num_phonemes, name="labels")
        return self.assignment[labels]

    # -- file I/O -----------------------------------------------------------

    def to_text(self, alphabet: PhonemeAlphabet, fingerprint: str = "") -> str:
        lines = []
        if fingerprint:
            lines.append(f"# fingerprint\t{fingerprint}")
        for phoneme, viseme in enumerate(self.assignment):
            lines.append(f"{alphabet.symbol(phoneme)}\t{int(viseme)}")
        for a, b in self.history:
            lines.append(f"merge\t{a}\t{b}")
        return "\n".join(lines) + "\n"

    def save(self, path, alphabet: PhonemeAlphabet, fingerprint: str = "") -> None:
        atomic_write_text(path, self.to_text(alphabet, fingerprint))

    @classmethod
    def load(cls, path, alphabet: PhonemeAlphabet):
        """Load a map file; returns (map, fingerprint)."""
        assignment = np.full(len(alphabet), -1, dtype=np.int64)
        history = []
        fingerprint = ""
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split("\t")
                if parts and parts[0] == "fingerprint" and len(parts) > 1:
                    fingerprint = parts[1]
                continue
            parts = line.split("\t")
            if parts[0] == "merge":
                if len(parts) != 3:
                    raise VisemeMapError(f"{path}:{lineno}: bad merge line")
                history.append((int(parts[1]), int(parts[2])))
            else:
                if len(parts) != 2:
                    raise VisemeMapError(f"{path}:{lineno}: bad assignment line")
                symbol, viseme = parts
                assignment[alphabet.index(symbol)] = int(viseme)
        if np.any(assignment < 0):
            raise VisemeMapError(f"{path}: incomplete phoneme assignment")
        num_visemes = int(assignment.max()) + 1
        vmap = cls(assignment, num_visemes, history)
        if history and not np.array_equal(
            cls.from_history(len(alphabet), history).assignment, vmap.assignment
        ):
            raise VisemeMapError(f"{path}: merge history does not replay to map")
        return vmap, fingerprint


class VisemeMapper(BaseEstimator):
    """Learn a phoneme-to-viseme grouping from labeled frame features.

    Parameters
    ----------
    target_visemes : desired viseme count (1..num_classes).
    holdout_fraction : share of utterances reserved for the confusion matrix.
    seed : RNG seed for the utterance split.
    retrain_each_step : retrain the classifier on merged classes after every
        merge instead of aggregating the confusion matrix.
    trainer : callable ``(X, y, num_classes) -> predict`` returning a frame
        classifier; defaults to the package's one-vs-rest LDA bank.
    """

    def __init__(self, target_visemes=20, holdout_fraction=0.2, seed=0,
                 retrain_each_step=False, trainer=None):
        self.target_visemes = target_visemes
        self.holdout_fraction = holdout_fraction
        self.seed = seed
        self.retrain_each_step = retrain_each_step
        self.trainer = trainer

    def fit(self, feature_seqs, label_seqs, num_classes=32):
        """Fit on per-utterance feature arrays and aligned label arrays."""
        if len(feature_seqs) != len(label_seqs):
            raise VisemeMapError("feature and label sequence counts differ")
        if not 1 <= self.target_visemes <= num_classes:
            raise VisemeMapError(
                f"target_visemes must lie in [1, {num_classes}]"
            )
        if self.target_visemes == num_classes:
            self.map_ = VisemeMap.identity(num_classes)
            self.confusion_ = None
            return self

        if not feature_seqs:
            raise VisemeMapError("no training utterances")
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(feature_seqs))
        n_holdout = max(1, int(round(self.holdout_fraction * len(feature_seqs))))
        if n_holdout >= len(feature_seqs):
            raise VisemeMapError("holdout split leaves no training utterances")
        holdout_idx = set(order[:n_holdout].tolist())

        train_x = np.concatenate(
            [feature_seqs[k] for k in range(len(feature_seqs)) if k not in holdout_idx]
        )
        train_y = np.concatenate(
            [label_seqs[k] for k in range(len(label_seqs)) if k not in holdout_idx]
        )
        held_x = np.concatenate([feature_seqs[k] for k in sorted(holdout_idx)])
        held_y = np.concatenate([label_seqs[k] for k in sorted(holdout_idx)])

        present = np.bincount(train_y, minlength=num_classes)
        missing = np.flatnonzero(present == 0)
        if missing.size:
            raise VisemeMapError(
                "insufficient data to train: classes with 0 training frames: "
                f"{missing.tolist()}"
            )

        trainer = self.trainer if self.trainer is not None else _lda_trainer
        predict = trainer(train_x, train_y, num_classes)
        counts = confusion_matrix(held_y, predict(held_x), num_classes)
        self.confusion_ = counts

        if not self.retrain_each_step:
            groups, history, _ = greedy_merge(counts, self.target_visemes)
            self.map_ = VisemeMap.from_groups(num_classes, groups, history)
            return self

        # retrain variant: after each merge, relabel to merged classes,
        # retrain, and recompute the confusion matrix before the next step
        groups = [[k] for k in range(num_classes)]
        history = []
        while len(groups) > self.target_visemes:
            _, (i, j) = merge_step(counts)
            history.append((groups[i][0], groups[j][0]))
            groups[i] = sorted(groups[i] + groups[j])
            del groups[j]
            if len(groups) == self.target_visemes:
                break
            relabel = np.zeros(num_classes, dtype=np.int64)
            for gid, group in enumerate(groups):
                relabel[group] = gid
            predict = trainer(train_x, relabel[train_y], len(groups))
            counts = confusion_matrix(relabel[held_y], predict(held_x), len(groups))
        self.map_ = VisemeMap.from_groups(num_classes, groups, history)
        return self


def _lda_trainer(train_x, train_y, num_classes):
    from .recognizer import LdaVisemeBank

    bank = LdaVisemeBank().fit(train_x, train_y, num_classes=num_classes)
    return bank.predict


def build_viseme_map(feature_seqs, label_seqs, target_visemes, num_classes=32,
                     seed=0, retrain_each_step=False, trainer=None) -> VisemeMap:
    """Functional wrapper around :class:`VisemeMapper`."""
    mapper = VisemeMapper(
        target_visemes=target_visemes,
        seed=seed,
        retrain_each_step=retrain_each_step,
        trainer=trainer,
    )
    return mapper.fit(feature_seqs, label_seqs, num_classes=num_classes).map_
