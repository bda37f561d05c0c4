"""Shared test helpers: independent oracles and random instance builders.

The oracles here intentionally reimplement definitions from first principles
(explicit cosine sums, Simpson quadrature, pure-Python arithmetic) so tests
never share a numerical code path with the implementation they check.
"""

import math

import numpy as np


def dct2d_reference(block):
    """Orthonormal DCT-II by direct evaluation of the defining double sum."""
    a = np.asarray(block, dtype=float)
    height, width = a.shape
    out = np.zeros((height, width))
    for u in range(height):
        for v in range(width):
            alpha_u = math.sqrt(1.0 / height) if u == 0 else math.sqrt(2.0 / height)
            alpha_v = math.sqrt(1.0 / width) if v == 0 else math.sqrt(2.0 / width)
            total = 0.0
            for x in range(height):
                for y in range(width):
                    total += (
                        a[x, y]
                        * math.cos(math.pi * (2 * x + 1) * u / (2 * height))
                        * math.cos(math.pi * (2 * y + 1) * v / (2 * width))
                    )
            out[u, v] = alpha_u * alpha_v * total
    return out


def student_t_sf_quadrature(t_value, df, steps=20_000, span=60.0):
    """One-sided survival P(T >= t) by Simpson integration of the t density."""
    def density(x):
        log_pdf = (
            math.lgamma((df + 1) / 2.0)
            - math.lgamma(df / 2.0)
            - 0.5 * math.log(df * math.pi)
            - ((df + 1) / 2.0) * math.log1p(x * x / df)
        )
        return math.exp(log_pdf)

    lo, hi = t_value, t_value + span
    if steps % 2 == 1:
        steps += 1
    h = (hi - lo) / steps
    total = density(lo) + density(hi)
    for k in range(1, steps):
        total += density(lo + k * h) * (4 if k % 2 == 1 else 2)
    return total * h / 3.0


def random_hmm_instance(rng, max_states=4, max_frames=6, max_visemes=3):
    """A random well-formed HMM instance (continuous parameters, no ties)."""
    n_states = int(rng.integers(1, max_states + 1))
    n_frames = int(rng.integers(1, max_frames + 1))
    n_visemes = int(rng.integers(1, max_visemes + 1))
    initial = rng.dirichlet(np.ones(n_states))
    transitions = rng.dirichlet(np.ones(n_states), size=n_states)
    emissions = rng.dirichlet(np.ones(n_visemes), size=n_states)
    scores = rng.dirichlet(np.ones(n_visemes), size=n_frames)
    return initial, transitions, emissions, scores


def random_two_class_problem(rng, max_dim=8, max_condition=100.0):
    """Well-conditioned two-class LDA data; returns (X, y).

    The within-class covariance has a condition number at most
    ``max_condition``; both classes share it.
    """
    dim = int(rng.integers(2, max_dim + 1))
    eigenvalues = rng.uniform(1.0, max_condition, size=dim)
    eigenvalues[0] = 1.0
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    cov_half = basis @ np.diag(np.sqrt(eigenvalues)) @ basis.T
    mu0 = rng.standard_normal(dim) * 2.0
    mu1 = mu0 + rng.standard_normal(dim) * 3.0 + 0.5
    n = int(rng.integers(40, 80))
    x0 = mu0 + rng.standard_normal((n, dim)) @ cov_half
    x1 = mu1 + rng.standard_normal((n, dim)) @ cov_half
    X = np.vstack([x0, x1])
    y = np.array([0] * n + [1] * n)
    return X, y


def frames_from_words(rng, text, lexicon, alphabet, min_dur=2, max_dur=6):
    """Noiseless frame labels for a sentence with silence between words."""
    silence = alphabet.silence_index
    labels = [silence] * int(rng.integers(min_dur, max_dur + 1))
    for w, word in enumerate(text):
        if w > 0:
            labels.extend([silence] * int(rng.integers(min_dur, max_dur + 1)))
        for symbol in lexicon.pronunciation(word):
            labels.extend(
                [alphabet.index(symbol)] * int(rng.integers(min_dur, max_dur + 1))
            )
    labels.extend([silence] * int(rng.integers(min_dur, max_dur + 1)))
    return np.asarray(labels, dtype=np.int64)
