"""Independent brute-force oracles.

These deliberately avoid the code paths they check: exhaustive path
enumeration instead of dynamic programming, an explicit Gauss-Jordan inverse
instead of a linear solve, and label permutation instead of rank-distribution
arithmetic. Plain Python arithmetic throughout, clarity over speed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_ENUMERATION = 1_000_000


class OracleError(ValueError):
    """Raised when an oracle instance is too large or degenerate."""


@dataclass
class OracleResult:
    path: tuple
    log_probability: float
    enumeration_size: int


def brute_force_viterbi(initial, transitions, emissions, frame_scores,
                        emission_floor=1e-10) -> OracleResult:
    """Exhaustive best-path search over all S^T state paths.

    Scores the same objective as the decoder: log initial + log transitions
    + log of the floored viseme-mixture emissions. Paths are visited in
    lexicographic order and only strictly better scores replace the
    incumbent, so ties resolve to the lexicographically smallest path.
    """
    initial = [float(v) for v in initial]
    transitions = [[float(v) for v in row] for row in transitions]
    emissions = [[float(v) for v in row] for row in emissions]
    scores = [[float(v) for v in row] for row in frame_scores]
    num_states = len(initial)
    num_frames = len(scores)
    if num_frames == 0:
        raise OracleError("empty frame score sequence")
    size = num_states ** num_frames
    if size > MAX_ENUMERATION:
        raise OracleError(
            f"instance too large: {num_states}^{num_frames} = {size} paths"
        )

    def safe_log(v):
        return math.log(v) if v > 0 else -math.inf

    log_init = [safe_log(v) for v in initial]
    log_trans = [[safe_log(v) for v in row] for row in transitions]
    log_emit = []
    for obs in scores:
        row = []
        for state_em in emissions:
            mix = sum(e * o for e, o in zip(state_em, obs))
            row.append(math.log(max(mix, emission_floor)))
        log_emit.append(row)

    best_path = None
    best_lp = -math.inf
    for path in itertools.product(range(num_states), repeat=num_frames):
        lp = log_init[path[0]] + log_emit[0][path[0]]
        for t in range(1, num_frames):
            lp += log_trans[path[t - 1]][path[t]] + log_emit[t][path[t]]
        if lp > best_lp:
            best_lp = lp
            best_path = path
    return OracleResult(best_path, best_lp, size)


def _gauss_jordan_inverse(matrix):
    """Explicit small-matrix inverse with partial pivoting."""
    n = len(matrix)
    aug = [list(map(float, row)) + [1.0 if i == j else 0.0 for j in range(n)]
           for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if abs(aug[pivot][col]) < 1e-300:
            raise OracleError("singular scatter matrix")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        scale = aug[col][col]
        aug[col] = [v / scale for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0.0:
                factor = aug[r][col]
                aug[r] = [rv - factor * cv for rv, cv in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def closed_form_lda_2class(X, y):
    """Two-class Fisher direction ``inv(S_w) (mu_first - mu_second)``.

    Classes are taken in sorted label order. The within-class scatter is the
    sum of centered outer products over both classes.
    """
    rows = [list(map(float, r)) for r in np.asarray(X)]
    labels = list(np.asarray(y).tolist())
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise OracleError(f"expected 2 classes, got {len(classes)}")
    dim = len(rows[0])

    def class_mean(c):
        members = [r for r, lab in zip(rows, labels) if lab == c]
        return [sum(col) / len(members) for col in zip(*members)]

    mu = {c: class_mean(c) for c in classes}
    scatter = [[0.0] * dim for _ in range(dim)]
    for r, lab in zip(rows, labels):
        centered = [v - m for v, m in zip(r, mu[lab])]
        for i in range(dim):
            for j in range(dim):
                scatter[i][j] += centered[i] * centered[j]

    inv = _gauss_jordan_inverse(scatter)
    delta = [a - b for a, b in zip(mu[classes[0]], mu[classes[1]])]
    return np.array([sum(inv[i][j] * delta[j] for j in range(dim))
                     for i in range(dim)])


@dataclass
class PermutationPValue:
    p_value: float
    exact: bool
    iterations: int


def _midranks(values):
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def permutation_pvalue(group_x, group_y, statistic="mean-difference",
                       tail="greater", iterations=10_000,
                       seed=0) -> PermutationPValue:
    """Permutation p-value for a two-sample location statistic.

    Enumerates every group assignment when there are at most ``iterations``
    of them (exact, no correction); otherwise samples random assignments and
    applies the plus-one correction. ``statistic`` is ``mean-difference`` or
    ``rank-sum`` (rank sum of group x over pooled midranks).
    """
    if iterations < 1_000:
        raise OracleError("iterations must be at least 1000")
    if tail not in ("greater", "less"):
        raise OracleError(f"tail must be 'greater' or 'less', got {tail!r}")
    x = [float(v) for v in group_x]
    y = [float(v) for v in group_y]
    nx = len(x)
    pooled = x + y
    n = len(pooled)

    if statistic == "mean-difference":
        values = pooled
        total = sum(values)

        def stat(indices):
            sx = sum(values[i] for i in indices)
            return sx / nx - (total - sx) / (n - nx)
    elif statistic == "rank-sum":
        values = _midranks(pooled)

        def stat(indices):
            return sum(values[i] for i in indices)
    else:
        raise OracleError(f"unknown statistic {statistic!r}")

    observed = stat(range(nx))
    tol = 1e-9 * max(1.0, abs(observed))

    def beats(candidate):
        if tail == "greater":
            return candidate >= observed - tol
        return candidate <= observed + tol

    n_combinations = math.comb(n, nx)
    if n_combinations <= iterations:
        hits = sum(
            1 for combo in itertools.combinations(range(n), nx)
            if beats(stat(combo))
        )
        return PermutationPValue(hits / n_combinations, True, n_combinations)

    rng = np.random.default_rng(seed)
    hits = 0
    indices = np.arange(n)
    for _ in range(iterations):
        rng.shuffle(indices)
        if beats(stat(indices[:nx].tolist())):
            hits += 1
    return PermutationPValue((hits + 1) / (iterations + 1), False, iterations)
