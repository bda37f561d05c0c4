"""Evaluation metrics and statistical comparison machinery.

Frame-level phoneme rates, sentence word rates via edit-distance alignment,
per-phoneme precision/recall, repetition/level/cumulative aggregates, and the
two cohort hypothesis tests (rank-sum and Welch's t), with exact small-sample
p-values by full combination enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .corpus import COHORTS, Participant, PhonemeAlphabet
from .validation import check_equal_length

SIGNIFICANCE_THRESHOLD = 0.05
EXACT_RANK_LIMIT = 20
MAX_EXACT_COMBINATIONS = 5_000_000

# canonical session layout: 25 sentences as 6+6+6+7 across the four levels
LEVEL_LAYOUT = (1,) * 6 + (2,) * 6 + (3,) * 6 + (4,) * 7


class EvaluationError(ValueError):
    """Raised for invalid metric inputs."""


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def frame_phoneme_rate(true_labels, predicted_labels) -> float:
    """Fraction of frames carrying the correct phoneme."""
    check_equal_length(true_labels, predicted_labels)
    true = np.asarray(true_labels)
    pred = np.asarray(predicted_labels)
    if true.size == 0:
        raise EvaluationError("empty label sequences")
    return float(np.mean(true == pred))


def align_words(reference, hypothesis):
    """Minimum-edit alignment maximizing matches among optimal alignments.

    Costs are 1 for substitution/insertion/deletion and 0 for a match; among
    minimum-cost alignments the one with the most matches is selected (a pure
    edit distance leaves the match count ambiguous). Returns
    (edit_distance, matches).
    """
    nr, nh = len(reference), len(hypothesis)
    # dp[j] = (edits, -matches) for ref[:i], hyp[:j]
    dp = [(j, 0) for j in range(nh + 1)]
    for i in range(1, nr + 1):
        prev = dp
        dp = [(i, 0)] + [None] * nh
        for j in range(1, nh + 1):
            if reference[i - 1] == hypothesis[j - 1]:
                best = (prev[j - 1][0], prev[j - 1][1] - 1)
            else:
                best = (prev[j - 1][0] + 1, prev[j - 1][1])
            for cand in ((prev[j][0] + 1, prev[j][1]),
                         (dp[j - 1][0] + 1, dp[j - 1][1])):
                if cand < best:
                    best = cand
            dp[j] = best
    edits, neg_matches = dp[nh]
    return edits, -neg_matches


def word_recognition_rate(reference, hypothesis) -> float:
    """Fraction of reference words recovered under edit-distance alignment."""
    if len(reference) == 0:
        raise EvaluationError("reference word sequence is empty")
    _, matches = align_words(list(reference), list(hypothesis))
    return matches / len(reference)


@dataclass
class PhonemeCounts:
    """Frame-level detection counts for one phoneme."""

    phoneme: str
    tp: int
    fp: int
    fn: int

    @property
    def precision(self):
        total = self.tp + self.fp
        return self.tp / total if total else None

    @property
    def recall(self):
        total = self.tp + self.fn
        return self.tp / total if total else None


def phoneme_prf(true_labels, predicted_labels, alphabet: PhonemeAlphabet):
    """Per-phoneme frame counts with undefined-safe precision/recall.

    A phoneme absent from both sequences has all-zero counts and its
    precision/recall are reported as absent (None), never 0 or 1.
    """
    check_equal_length(true_labels, predicted_labels)
    true = np.asarray(true_labels, dtype=np.int64)
    pred = np.asarray(predicted_labels, dtype=np.int64)
    n = len(alphabet)
    results = []
    for p in range(n):
        is_true = true == p
        is_pred = pred == p
        tp = int(np.sum(is_true & is_pred))
        fp = int(np.sum(~is_true & is_pred))
        fn = int(np.sum(is_true & ~is_pred))
        results.append(PhonemeCounts(alphabet.symbol(p), tp, fp, fn))
    return results


def participant_word_accuracy(participant: Participant, repetition: int) -> float:
    """Mean per-sentence word accuracy for one participant and repetition."""
    if repetition not in participant.accuracies:
        raise EvaluationError(
            f"participant {participant.id} has no data for repetition {repetition}"
        )
    values = participant.accuracies[repetition]
    if not values:
        raise EvaluationError(
            f"participant {participant.id} has no sentences for repetition {repetition}"
        )
    return float(np.mean(values))


def cumulative_curve(values):
    """Running mean of per-sentence values in presentation order."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EvaluationError("empty value sequence")
    return np.cumsum(arr) / np.arange(1, arr.size + 1)


# ---------------------------------------------------------------------------
# hypothesis tests
# ---------------------------------------------------------------------------

@dataclass
class TestResult:
    name: str
    statistic: float
    p_value: float
    tail: str
    method: str
    df: float | None = None

    def significant(self, threshold=SIGNIFICANCE_THRESHOLD):
        return self.p_value < threshold


def _midranks(values):
    """Fractional ranks (1-based); ties share the mean of their ranks."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def _normal_sf(z):
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def rank_sum_test(group_x, group_y, tail="greater",
                  force_exact=False) -> TestResult:
    """Two-independent-sample rank-sum (Mann-Whitney) test.

    Exact p-values come from full enumeration of the C(n, n_x) group
    assignments over pooled midranks when the combined size is at most 20
    (or ``force_exact``); otherwise a tie-corrected normal approximation
    with continuity correction is used. ``tail="greater"`` tests whether x
    is stochastically greater than y.
    """
    x = [float(v) for v in group_x]
    y = [float(v) for v in group_y]
    if not x or not y:
        raise EvaluationError("both groups must be nonempty")
    if tail not in ("greater", "less"):
        raise EvaluationError(f"tail must be 'greater' or 'less', got {tail!r}")
    nx, ny = len(x), len(y)
    n = nx + ny
    ranks = _midranks(x + y)
    rank_sum_x = sum(ranks[:nx])
    u_stat = rank_sum_x - nx * (nx + 1) / 2.0

    if force_exact or n <= EXACT_RANK_LIMIT:
        n_combinations = math.comb(n, nx)
        if n_combinations > MAX_EXACT_COMBINATIONS:
            raise EvaluationError(
                f"exact enumeration needs {n_combinations} combinations; "
                "use the normal approximation for groups this large"
            )
        total = 0
        hits = 0
        tol = 1e-9
        for combo in itertools.combinations(range(n), nx):
            total += 1
            perm_sum = sum(ranks[k] for k in combo)
            if tail == "greater":
                if perm_sum >= rank_sum_x - tol:
                    hits += 1
            else:
                if perm_sum <= rank_sum_x + tol:
                    hits += 1
        return TestResult("rank-sum", u_stat, hits / total, tail, "exact")

    mean_u = nx * ny / 2.0
    tie_counts = {}
    for r in ranks:
        tie_counts[r] = tie_counts.get(r, 0) + 1
    tie_term = sum(c ** 3 - c for c in tie_counts.values())
    tie_factor = 1.0 - tie_term / (n ** 3 - n)
    sd = math.sqrt(tie_factor * nx * ny * (n + 1) / 12.0)
    if sd == 0.0:
        # every pooled value identical: no evidence in either tail
        return TestResult("rank-sum", u_stat, 1.0, tail, "normal")
    if tail == "greater":
        z = (u_stat - mean_u - 0.5) / sd
        p = _normal_sf(z)
    else:
        z = (u_stat - mean_u + 0.5) / sd
        p = _normal_sf(-z)
    return TestResult("rank-sum", u_stat, p, tail, "normal")


def signed_rank_test(group_x, group_y, tail="greater") -> TestResult:
    """Paired Wilcoxon signed-rank test; requires an explicit pairing.

    Included for the paired reading of the cohort comparison; the unpaired
    rank-sum test is the primary tool. Exact p by dynamic programming over
    sign assignments for up to 25 nonzero differences; normal approximation
    with tie correction beyond that.
    """
    if len(group_x) != len(group_y):
        raise EvaluationError("signed-rank test needs paired samples of equal size")
    if tail not in ("greater", "less"):
        raise EvaluationError(f"tail must be 'greater' or 'less', got {tail!r}")
    diffs = [float(a) - float(b) for a, b in zip(group_x, group_y)]
    diffs = [d for d in diffs if d != 0.0]
    if not diffs:
        return TestResult("signed-rank", 0.0, 1.0, tail, "degenerate")
    ranks = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    n = len(diffs)

    if n <= 25:
        # distribution of 2*W+ over all 2^n sign assignments
        scaled = [int(round(2 * r)) for r in ranks]
        dist = {0: 1}
        for s in scaled:
            nxt = {}
            for total, ways in dist.items():
                nxt[total] = nxt.get(total, 0) + ways
                nxt[total + s] = nxt.get(total + s, 0) + ways
            dist = nxt
        observed = int(round(2 * w_plus))
        denom = 2 ** n
        if tail == "greater":
            hits = sum(w for s, w in dist.items() if s >= observed)
        else:
            hits = sum(w for s, w in dist.items() if s <= observed)
        return TestResult("signed-rank", w_plus, hits / denom, tail, "exact")

    mean_w = n * (n + 1) / 4.0
    tie_counts = {}
    for r in ranks:
        tie_counts[r] = tie_counts.get(r, 0) + 1
    tie_term = sum(c ** 3 - c for c in tie_counts.values()) / 48.0
    sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    if tail == "greater":
        p = _normal_sf((w_plus - mean_w - 0.5) / sd)
    else:
        p = _normal_sf(-(w_plus - mean_w + 0.5) / sd)
    return TestResult("signed-rank", w_plus, p, tail, "normal")


def t_test_unpaired(group_x, group_y, tail="greater") -> TestResult:
    """Welch's unpaired two-sample t-test with Welch-Satterthwaite df."""
    x = np.asarray([float(v) for v in group_x])
    y = np.asarray([float(v) for v in group_y])
    if x.size < 2 or y.size < 2:
        raise EvaluationError("each group needs at least 2 observations")
    if tail not in ("greater", "less"):
        raise EvaluationError(f"tail must be 'greater' or 'less', got {tail!r}")
    vx = x.var(ddof=1)
    vy = y.var(ddof=1)
    mean_diff = x.mean() - y.mean()
    se2 = vx / x.size + vy / y.size
    if se2 == 0.0:
        if mean_diff == 0.0:
            return TestResult("welch-t", 0.0, 0.5, tail, "degenerate", df=None)
        t = math.inf if mean_diff > 0 else -math.inf
        p = (0.0 if t > 0 else 1.0) if tail == "greater" else (1.0 if t > 0 else 0.0)
        return TestResult("welch-t", t, p, tail, "degenerate", df=None)
    t = mean_diff / math.sqrt(se2)
    df = se2 ** 2 / (
        (vx / x.size) ** 2 / (x.size - 1) + (vy / y.size) ** 2 / (y.size - 1)
    )
    if tail == "greater":
        p = float(stdtr(df, -t))
    else:
        p = float(stdtr(df, t))
    return TestResult("welch-t", float(t), p, tail, "welch", df=float(df))


@dataclass
class CohortComparison:
    """Both cohort tests for a single repetition."""

    repetition: int
    group_x_label: str
    group_y_label: str
    group_x: list
    group_y: list
    rank_sum: TestResult
    t_test: TestResult
    threshold: float = SIGNIFICANCE_THRESHOLD

    @property
    def rank_sum_significant(self):
        return self.rank_sum.significant(self.threshold)

    @property
    def t_test_significant(self):
        return self.t_test.significant(self.threshold)

    def to_dict(self):
        def test_dict(t):
            return {
                "name": t.name,
                "statistic": _jsonable(t.statistic),
                "p_value": _jsonable(t.p_value),
                "tail": t.tail,
                "method": t.method,
                "df": _jsonable(t.df),
                "significant": bool(t.significant(self.threshold)),
            }

        return {
            "repetition": self.repetition,
            "group_x": self.group_x_label,
            "group_y": self.group_y_label,
            "n_x": len(self.group_x),
            "n_y": len(self.group_y),
            "mean_x": float(np.mean(self.group_x)),
            "mean_y": float(np.mean(self.group_y)),
            "threshold": self.threshold,
            "rank_sum": test_dict(self.rank_sum),
            "t_test": test_dict(self.t_test),
        }


def cohort_compare(participants, repetition: int,
                   threshold=SIGNIFICANCE_THRESHOLD,
                   force_exact=False) -> CohortComparison:
    """Test whether hearing-impaired participants outperform normal-hearing.

    Computes each participant's mean word accuracy for the repetition and
    runs the one-sided rank-sum and Welch t-tests with hearing-impaired as
    group x.
    """
    impaired, normal = COHORTS
    x = [participant_word_accuracy(p, repetition)
         for p in participants if p.cohort == impaired]
    y = [participant_word_accuracy(p, repetition)
         for p in participants if p.cohort == normal]
    if not x or not y:
        raise EvaluationError("both cohorts must be nonempty")
    return CohortComparison(
        repetition=repetition,
        group_x_label=impaired,
        group_y_label=normal,
        group_x=x,
        group_y=y,
        rank_sum=rank_sum_test(x, y, tail="greater", force_exact=force_exact),
        t_test=t_test_unpaired(x, y, tail="greater"),
        threshold=threshold,
    )


def _jsonable(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None
