import math

import numpy as np
import pytest

from helpers import student_t_sf_quadrature
from lrc.corpus import Participant
from lrc.evaluation import (
    EvaluationError,
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
from lrc.oracles import permutation_pvalue


class TestFramePhonemeRate:
    def test_identical(self):
        assert frame_phoneme_rate([1, 2, 3], [1, 2, 3]) == 1.0

    def test_hand_count(self, alphabet):
        true = [alphabet.index(s) for s in ("a", "a", "sil", "sil")]
        pred = [alphabet.index(s) for s in ("a", "sil", "sil", "sil")]
        assert frame_phoneme_rate(true, pred) == 0.75

    def test_disjoint(self):
        assert frame_phoneme_rate([0, 0], [1, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            frame_phoneme_rate([0], [0, 1])

    def test_empty(self):
        with pytest.raises(EvaluationError):
            frame_phoneme_rate([], [])


class TestWordRecognitionRate:
    def test_identical(self):
        assert word_recognition_rate(["a", "b"], ["a", "b"]) == 1.0

    def test_empty_hypothesis(self):
        assert word_recognition_rate(["a", "b"], []) == 0.0

    def test_hand_alignment(self):
        assert word_recognition_rate(
            ["hola", "que", "tal"], ["hola", "tal"]
        ) == pytest.approx(2 / 3)

    def test_empty_reference_rejected(self):
        with pytest.raises(EvaluationError):
            word_recognition_rate([], ["a"])

    def test_order_matters(self):
        forward = word_recognition_rate(["a", "b", "c"], ["a", "b", "c"])
        shuffled = word_recognition_rate(["a", "b", "c"], ["c", "b", "a"])
        assert forward == 1.0
        assert shuffled < 1.0

    def test_bounded_by_bag_overlap(self):
        rng = np.random.default_rng(50)
        vocab = list("abcde")
        for _ in range(100):
            ref = [vocab[i] for i in rng.integers(0, 5, size=rng.integers(1, 9))]
            hyp = [vocab[i] for i in rng.integers(0, 5, size=rng.integers(0, 9))]
            rate = word_recognition_rate(ref, hyp)
            overlap = sum(
                min(ref.count(w), hyp.count(w)) for w in set(ref)
            ) / len(ref)
            assert rate <= overlap + 1e-12
            assert 0.0 <= rate <= 1.0

    def test_no_double_credit_for_repeats(self):
        assert word_recognition_rate(["a"], ["a", "a", "a"]) == 1.0
        assert word_recognition_rate(["a", "a", "a"], ["a"]) == pytest.approx(1 / 3)


class TestPhonemePrf:
    def test_perfect_prediction(self, alphabet):
        labels = [alphabet.index(s) for s in ("a", "e", "a", "sil")]
        for entry in phoneme_prf(labels, labels, alphabet):
            if entry.tp:
                assert entry.precision == 1.0
                assert entry.recall == 1.0

    def test_all_predicted_a(self, alphabet):
        a, e = alphabet.index("a"), alphabet.index("e")
        true = [a] * 5 + [e] * 5
        pred = [a] * 10
        by_symbol = {c.phoneme: c for c in phoneme_prf(true, pred, alphabet)}
        assert by_symbol["a"].precision == 0.5
        assert by_symbol["a"].recall == 1.0
        assert by_symbol["e"].recall == 0.0
        assert by_symbol["e"].precision is None  # never predicted

    def test_absent_phoneme_reported_absent(self, alphabet):
        a = alphabet.index("a")
        counts = {c.phoneme: c for c in phoneme_prf([a], [a], alphabet)}
        assert counts["x"].tp == counts["x"].fp == counts["x"].fn == 0
        assert counts["x"].precision is None
        assert counts["x"].recall is None

    def test_fp_fn_totals_equal_misclassified(self, alphabet):
        rng = np.random.default_rng(51)
        for _ in range(100):
            n = int(rng.integers(1, 200))
            true = rng.integers(0, 32, size=n)
            pred = rng.integers(0, 32, size=n)
            counts = phoneme_prf(true, pred, alphabet)
            wrong = int(np.sum(true != pred))
            assert sum(c.fp for c in counts) == wrong
            assert sum(c.fn for c in counts) == wrong

    def test_micro_recall_equals_frame_rate(self, alphabet):
        rng = np.random.default_rng(52)
        for _ in range(25):
            n = int(rng.integers(1, 150))
            true = rng.integers(0, 32, size=n)
            pred = rng.integers(0, 32, size=n)
            counts = phoneme_prf(true, pred, alphabet)
            tp = sum(c.tp for c in counts)
            fn = sum(c.fn for c in counts)
            assert tp / (tp + fn) == frame_phoneme_rate(true, pred)


class TestParticipantAccuracy:
    def test_all_ones(self):
        p = Participant("p", "normal-hearing", {1: [1.0] * 25})
        assert participant_word_accuracy(p, 1) == 1.0

    def test_half(self):
        p = Participant("p", "normal-hearing", {2: [0.0, 1.0]})
        assert participant_word_accuracy(p, 2) == 0.5

    def test_matches_compensated_summation(self):
        rng = np.random.default_rng(53)
        values = rng.uniform(0, 1, size=25).tolist()
        p = Participant("p", "hearing-impaired", {1: values})
        oracle = math.fsum(values) / len(values)
        assert participant_word_accuracy(p, 1) == pytest.approx(oracle, abs=1e-12)

    def test_missing_repetition(self):
        p = Participant("p", "normal-hearing", {1: [0.5]})
        with pytest.raises(EvaluationError):
            participant_word_accuracy(p, 3)


class TestCumulativeCurve:
    def test_constant_sequence(self):
        assert np.allclose(cumulative_curve([0.4] * 5), 0.4)

    def test_two_values(self):
        assert cumulative_curve([0.0, 1.0]).tolist() == [0.0, 0.5]

    def test_appending_current_mean_keeps_curve_flat(self):
        rng = np.random.default_rng(54)
        values = rng.uniform(0, 1, size=10).tolist()
        mean = float(np.mean(values))
        extended = cumulative_curve(values + [mean])
        assert extended[-1] == pytest.approx(extended[-2])

    def test_empty_rejected(self):
        with pytest.raises(EvaluationError):
            cumulative_curve([])


class TestRankSum:
    def test_exact_separated_case(self):
        result = rank_sum_test([3, 4], [1, 2], tail="greater")
        assert result.method == "exact"
        assert result.p_value == pytest.approx(1 / 6)

    def test_singletons_with_tie(self):
        result = rank_sum_test([1], [1], tail="greater")
        assert result.p_value >= 0.5

    def test_swap_groups_reverse_tail(self):
        rng = np.random.default_rng(55)
        x = rng.uniform(0, 1, size=6).tolist()
        y = rng.uniform(0, 1, size=8).tolist()
        forward = rank_sum_test(x, y, tail="greater")
        backward = rank_sum_test(y, x, tail="less")
        assert forward.p_value == pytest.approx(backward.p_value, abs=1e-12)

    def test_exact_matches_enumerated_permutations(self):
        rng = np.random.default_rng(56)
        x = rng.normal(0.3, 1.0, size=8).tolist()
        y = rng.normal(0.0, 1.0, size=9).tolist()
        exact = rank_sum_test(x, y, tail="greater")
        assert exact.method == "exact"
        oracle = permutation_pvalue(
            x, y, statistic="rank-sum", tail="greater",
            iterations=100_000, seed=1,
        )
        assert oracle.exact  # C(17, 8) fits inside the iteration budget
        assert oracle.p_value == pytest.approx(exact.p_value, abs=1e-12)

    def test_exact_within_three_se_of_monte_carlo(self):
        # 10+10 samples: C(20,10) exceeds 1e5, forcing the sampling path
        rng = np.random.default_rng(66)
        x = rng.normal(0.4, 1.0, size=10).tolist()
        y = rng.normal(0.0, 1.0, size=10).tolist()
        exact = rank_sum_test(x, y, tail="greater")
        assert exact.method == "exact"
        oracle = permutation_pvalue(
            x, y, statistic="rank-sum", tail="greater",
            iterations=100_000, seed=5,
        )
        assert not oracle.exact
        se = math.sqrt(exact.p_value * (1 - exact.p_value) / oracle.iterations)
        assert abs(oracle.p_value - exact.p_value) <= 3 * se + 1e-9

    def test_normal_approximation_tracks_exact_beyond_limit(self):
        rng = np.random.default_rng(57)
        x = rng.normal(0.5, 1.0, size=11).tolist()
        y = rng.normal(0.0, 1.0, size=10).tolist()
        approx = rank_sum_test(x, y, tail="greater")
        exact = rank_sum_test(x, y, tail="greater", force_exact=True)
        assert approx.method == "normal"
        assert exact.method == "exact"
        assert approx.p_value == pytest.approx(exact.p_value, abs=0.01)

    def test_force_exact_beyond_limit(self):
        rng = np.random.default_rng(58)
        x = rng.uniform(0, 1, size=9).tolist()
        y = rng.uniform(0, 1, size=15).tolist()
        result = rank_sum_test(x, y, tail="greater", force_exact=True)
        assert result.method == "exact"
        oracle = permutation_pvalue(
            x, y, statistic="rank-sum", tail="greater",
            iterations=2_000_000, seed=2,
        )
        assert oracle.exact
        assert result.p_value == pytest.approx(oracle.p_value, abs=1e-12)

    def test_empty_group_rejected(self):
        with pytest.raises(EvaluationError):
            rank_sum_test([], [1.0])

    def test_forced_enumeration_bounded(self):
        rng = np.random.default_rng(67)
        x = rng.uniform(0, 1, size=20).tolist()
        y = rng.uniform(0, 1, size=20).tolist()
        with pytest.raises(EvaluationError, match="combinations"):
            rank_sum_test(x, y, force_exact=True)


class TestSignedRank:
    def test_identical_pairs_degenerate(self):
        result = signed_rank_test([1.0, 2.0], [1.0, 2.0])
        assert result.p_value == 1.0

    def test_all_positive_differences(self):
        # n=3 nonzero diffs, all positive: P(W+ >= 6) = 1/8
        result = signed_rank_test([2.0, 3.0, 4.0], [1.0, 1.0, 1.0])
        assert result.method == "exact"
        assert result.p_value == pytest.approx(1 / 8)

    def test_requires_pairing(self):
        with pytest.raises(EvaluationError):
            signed_rank_test([1.0, 2.0], [1.0])


class TestWelchT:
    def test_identical_groups(self):
        result = t_test_unpaired([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(0.5, abs=1e-9)

    def test_huge_separation(self):
        rng = np.random.default_rng(59)
        y = rng.normal(0.0, 1.0, size=10)
        x = y + 10.0 * np.sqrt(2)  # ten pooled standard deviations above
        result = t_test_unpaired(x.tolist(), y.tolist())
        assert result.p_value < 1e-6

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(60)
        for _ in range(5):
            x = rng.normal(0.4, 1.0, size=12).tolist()
            y = rng.normal(0.0, 1.2, size=9).tolist()
            result = t_test_unpaired(x, y, tail="greater")
            oracle = student_t_sf_quadrature(result.statistic, result.df)
            assert result.p_value == pytest.approx(oracle, abs=1e-6)

    def test_zero_variance_equal_means(self):
        result = t_test_unpaired([1.0, 1.0], [1.0, 1.0])
        assert result.p_value == 0.5
        assert result.method == "degenerate"

    def test_zero_variance_unequal_means(self):
        result = t_test_unpaired([2.0, 2.0], [1.0, 1.0], tail="greater")
        assert result.p_value == 0.0

    def test_degenerate_sizes_rejected(self):
        with pytest.raises(EvaluationError):
            t_test_unpaired([1.0], [1.0, 2.0])


def make_cohorts(impaired_values, normal_values):
    participants = [
        Participant(f"hi{i}", "hearing-impaired", {1: [v] * 25})
        for i, v in enumerate(impaired_values)
    ]
    participants += [
        Participant(f"nh{i}", "normal-hearing", {1: [v] * 25})
        for i, v in enumerate(normal_values)
    ]
    return participants


class TestCohortCompare:
    def test_maximal_separation_significant(self):
        rng = np.random.default_rng(61)
        impaired = (0.9 + 0.05 * rng.random(9)).tolist()
        normal = (0.05 * rng.random(15)).tolist()
        comparison = cohort_compare(make_cohorts(impaired, normal), 1)
        assert comparison.rank_sum_significant
        assert comparison.t_test_significant

    def test_identical_cohorts_not_significant(self):
        rng = np.random.default_rng(62)
        shared = rng.uniform(0.3, 0.7, size=9).tolist()
        comparison = cohort_compare(
            make_cohorts(shared, shared + shared[:6]), 1
        )
        assert not comparison.rank_sum_significant
        assert not comparison.t_test_significant

    def test_empty_cohort_rejected(self):
        participants = [
            Participant("nh0", "normal-hearing", {1: [0.5] * 5})
        ]
        with pytest.raises(EvaluationError):
            cohort_compare(participants, 1)

    def test_uses_stated_groups(self):
        rng = np.random.default_rng(63)
        impaired = (0.6 + 0.1 * rng.random(9)).tolist()
        normal = (0.4 + 0.1 * rng.random(15)).tolist()
        comparison = cohort_compare(make_cohorts(impaired, normal), 1)
        assert comparison.group_x_label == "hearing-impaired"
        assert len(comparison.group_x) == 9
        assert len(comparison.group_y) == 15
        assert comparison.to_dict()["n_x"] == 9


class TestPermutationOracle:
    def test_full_enumeration_small_case(self):
        result = permutation_pvalue([3, 4], [1, 2], statistic="mean-difference",
                                    tail="greater", iterations=1000)
        assert result.exact
        assert result.p_value == pytest.approx(1 / 6)

    def test_identical_groups_near_half(self):
        rng = np.random.default_rng(64)
        values = rng.uniform(0, 1, size=12).tolist()
        result = permutation_pvalue(values, list(values),
                                    iterations=5000, seed=3)
        assert 0.3 < result.p_value < 0.7

    def test_monotone_in_separation(self):
        rng = np.random.default_rng(65)
        base = rng.uniform(0, 1, size=10).tolist()
        y = rng.uniform(0, 1, size=10).tolist()
        previous = 1.1
        for shift in (0.0, 0.5, 1.0, 2.0):
            result = permutation_pvalue(
                [v + shift for v in base], y, iterations=20_000, seed=4
            )
            assert result.p_value <= previous + 1e-9
            previous = result.p_value

    def test_rejects_too_few_iterations(self):
        from lrc.oracles import OracleError

        with pytest.raises(OracleError):
            permutation_pvalue([1.0], [2.0], iterations=10)
