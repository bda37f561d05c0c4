import time

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from helpers import frames_from_words, random_hmm_instance, random_two_class_problem
from lrc.corpus import Lexicon
from lrc.oracles import brute_force_viterbi, closed_form_lda_2class
from lrc.recognizer import (
    LdaVisemeBank,
    PhonemeHmm,
    RecognizerError,
    VisemeRecognizer,
    assemble_words,
    collapse_frames,
    load_model,
    save_model,
    train_hmm,
    viseme_scores,
    viterbi_decode,
)
from lrc.visememap import VisemeMap


def two_class_data_with_scatter():
    """Pooled within-class scatter proportional to [[2,0],[0,1]], delta (1,1)."""
    s = 1 / np.sqrt(2)
    points, labels = [], []
    for c, mu in enumerate((np.array([1.0, 1.0]), np.array([0.0, 0.0]))):
        for d in ((1, 0), (-1, 0), (0, s), (0, -s)):
            points.append(mu + np.array(d))
            labels.append(c)
    return np.array(points), np.array(labels)


class TestLdaVisemeBank:
    def test_symmetric_two_class_direction(self):
        # exactly isotropic within-class scatter: direction is the mean axis
        points, labels = [], []
        for c, mu in enumerate((np.array([1.0, 0.0]), np.array([-1.0, 0.0]))):
            for d in ((0.3, 0), (-0.3, 0), (0, 0.3), (0, -0.3)):
                points.append(mu + np.array(d))
                labels.append(c)
        bank = LdaVisemeBank(ridge=0.0).fit(np.array(points), np.array(labels))
        direction = bank.directions_[0]
        assert abs(direction[0]) == pytest.approx(1.0, abs=1e-12)
        assert direction[1] == pytest.approx(0.0, abs=1e-12)

    def test_hand_scatter_example(self):
        # (S_w)^-1 (1,1) with S_w prop to [[2,0],[0,1]] is prop to (0.5, 1)
        X, y = two_class_data_with_scatter()
        bank = LdaVisemeBank(ridge=0.0).fit(X, y)
        direction = bank.directions_[0]
        assert direction[1] / direction[0] == pytest.approx(2.0, abs=1e-9)

    def test_large_ridge_recovers_mean_difference(self):
        rng = np.random.default_rng(34)
        X, y = random_two_class_problem(rng)
        mu0 = X[y == 0].mean(axis=0)
        mu1 = X[y == 1].mean(axis=0)
        delta = mu0 - mu1
        bank = LdaVisemeBank(ridge=1e12).fit(X, y)
        direction = bank.directions_[0]
        cosine = direction @ delta / np.linalg.norm(direction) / np.linalg.norm(delta)
        assert cosine > 1 - 1e-6

    def test_matches_closed_form_oracle(self):
        rng = np.random.default_rng(35)
        for _ in range(10):
            X, y = random_two_class_problem(rng)
            bank = LdaVisemeBank(ridge=0.0).fit(X, y)
            oracle = closed_form_lda_2class(X, y)
            direction = bank.directions_[0]
            cosine = (
                direction @ oracle
                / np.linalg.norm(direction) / np.linalg.norm(oracle)
            )
            assert cosine > 0.999

    def test_singular_scatter_suggests_ridge(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        y = np.array([0, 0, 1, 1])
        with pytest.raises(RecognizerError, match="ridge"):
            LdaVisemeBank(ridge=0.0).fit(X, y)

    def test_empty_class_rejected(self):
        X = np.ones((4, 2))
        y = np.array([0, 0, 0, 0])
        with pytest.raises(RecognizerError, match="fewer than 2"):
            LdaVisemeBank().fit(X, y, num_classes=2)

    def test_scores_sum_to_one(self):
        rng = np.random.default_rng(36)
        X, y = random_two_class_problem(rng)
        bank = LdaVisemeBank().fit(X, y)
        probs = bank.predict_proba(X[:20])
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(probs >= 0)

    def test_argmax_matches_hard_prediction(self):
        rng = np.random.default_rng(37)
        X, y = random_two_class_problem(rng)
        bank = LdaVisemeBank().fit(X, y)
        assert np.array_equal(
            np.argmax(bank.predict_proba(X), axis=1), bank.predict(X)
        )

    def test_class_mean_scores_peak_at_own_class(self):
        rng = np.random.default_rng(38)
        means = np.eye(4) * 5.0
        X = np.vstack([
            mu + 0.1 * rng.standard_normal((50, 4)) for mu in means
        ])
        y = np.repeat(np.arange(4), 50)
        bank = LdaVisemeBank().fit(X, y)
        scores = viseme_scores(bank, means)
        assert np.array_equal(np.argmax(scores, axis=1), np.arange(4))

    def test_uniform_bank_gives_uniform_scores(self):
        bank = LdaVisemeBank()
        bank.directions_ = np.zeros((3, 2))
        bank.biases_ = np.zeros(3)
        bank.num_classes_ = 3
        bank.ridge_ = 0.0
        probs = bank.predict_proba(np.random.default_rng(1).random((5, 2)))
        assert np.allclose(probs, 1 / 3)

    def test_shift_invariance(self):
        rng = np.random.default_rng(39)
        X, y = random_two_class_problem(rng)
        shift = rng.standard_normal(X.shape[1]) * 10
        base = LdaVisemeBank(ridge=0.0).fit(X, y)
        shifted = LdaVisemeBank(ridge=0.0).fit(X + shift, y)
        assert np.allclose(
            base.predict_proba(X), shifted.predict_proba(X + shift), atol=1e-9
        )

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(40)
        X, y = random_two_class_problem(rng)
        bank = LdaVisemeBank().fit(X, y)
        with pytest.raises(RecognizerError, match="dimension"):
            bank.predict_proba(np.ones((2, X.shape[1] + 1)))

    def test_predict_before_fit(self):
        with pytest.raises(NotFittedError):
            LdaVisemeBank().predict(np.ones((2, 2)))


class TestPhonemeHmm:
    def test_bigram_counts_without_smoothing(self):
        hmm = PhonemeHmm(smoothing=0.0).fit(
            [np.array([0, 0, 1])], [np.array([0, 0, 1])], 2, 2
        )
        assert hmm.transitions_[0].tolist() == [0.5, 0.5]
        assert hmm.transitions_[1].tolist() == [0.0, 1.0]
        assert hmm.initial_.tolist() == [1.0, 0.0]

    def test_huge_smoothing_approaches_uniform(self):
        hmm = PhonemeHmm(smoothing=1e9).fit(
            [np.array([0, 0, 1])], [np.array([0, 1, 1])], 3, 2
        )
        assert np.allclose(hmm.transitions_, 1 / 3, atol=1e-6)
        assert np.allclose(hmm.emissions_, 1 / 2, atol=1e-6)
        assert np.allclose(hmm.initial_, 1 / 3, atol=1e-6)

    def test_rows_sum_to_one_on_random_input(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            n_states = int(rng.integers(2, 6))
            n_visemes = int(rng.integers(1, 4))
            seqs = [
                rng.integers(0, n_states, size=rng.integers(1, 30))
                for _ in range(3)
            ]
            vis = [rng.integers(0, n_visemes, size=len(s)) for s in seqs]
            hmm = train_hmm(seqs, vis, n_states, n_visemes,
                            smoothing=float(rng.uniform(0, 2)))
            assert np.allclose(hmm.transitions_.sum(axis=1), 1.0, atol=1e-9)
            assert np.allclose(hmm.emissions_.sum(axis=1), 1.0, atol=1e-9)
            assert hmm.initial_.sum() == pytest.approx(1.0, abs=1e-9)

    def test_rejects_negative_smoothing(self):
        with pytest.raises(RecognizerError):
            PhonemeHmm(smoothing=-1.0).fit([np.array([0])], [np.array([0])], 1, 1)

    def test_rejects_empty_training(self):
        with pytest.raises(RecognizerError):
            PhonemeHmm().fit([], [], 2, 2)


class TestViterbi:
    def test_single_frame_tie_breaks_to_lowest_state(self):
        # phonemes 0 and 1 share viseme 0; scores peak there
        initial = np.full(3, 1 / 3)
        transitions = np.full((3, 3), 1 / 3)
        emissions = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        scores = np.array([[1.0, 0.0]])
        path, _ = viterbi_decode(initial, transitions, emissions, scores)
        assert path.tolist() == [0]

    def test_two_state_toy_matches_enumeration(self):
        rng = np.random.default_rng(42)
        initial = rng.dirichlet([1, 1])
        transitions = rng.dirichlet([1, 1], size=2)
        emissions = rng.dirichlet([1, 1, 1], size=2)
        scores = rng.dirichlet([1, 1, 1], size=3)
        path, logp = viterbi_decode(initial, transitions, emissions, scores)
        oracle = brute_force_viterbi(initial, transitions, emissions, scores)
        assert oracle.enumeration_size == 8
        assert tuple(path.tolist()) == oracle.path
        assert logp == pytest.approx(oracle.log_probability, abs=1e-9)

    def test_deterministic_chain_forces_alternation(self):
        initial = np.array([1.0, 0.0])
        transitions = np.array([[0.0, 1.0], [1.0, 0.0]])
        emissions = np.array([[0.5, 0.5], [0.5, 0.5]])
        scores = np.full((3, 2), 0.5)
        path, _ = viterbi_decode(initial, transitions, emissions, scores)
        assert path.tolist() == [0, 1, 0]

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(43)
        for _ in range(60):
            initial, transitions, emissions, scores = random_hmm_instance(rng)
            path, logp = viterbi_decode(initial, transitions, emissions, scores)
            oracle = brute_force_viterbi(initial, transitions, emissions, scores)
            assert tuple(path.tolist()) == oracle.path
            assert logp == pytest.approx(oracle.log_probability, abs=1e-9)

    def test_beats_random_sampled_paths(self):
        rng = np.random.default_rng(44)
        initial = rng.dirichlet(np.ones(5))
        transitions = rng.dirichlet(np.ones(5), size=5)
        emissions = rng.dirichlet(np.ones(3), size=5)
        scores = rng.dirichlet(np.ones(3), size=20)
        _, best = viterbi_decode(initial, transitions, emissions, scores)
        log_emit = np.log(np.maximum(scores @ emissions.T, 1e-10))
        with np.errstate(divide="ignore"):
            log_init = np.log(initial)
            log_trans = np.log(transitions)
        for _ in range(1000):
            path = rng.integers(0, 5, size=20)
            lp = log_init[path[0]] + log_emit[0, path[0]]
            for t in range(1, 20):
                lp += log_trans[path[t - 1], path[t]] + log_emit[t, path[t]]
            assert lp <= best + 1e-9

    def test_emission_scale_invariance(self):
        rng = np.random.default_rng(45)
        initial, transitions, emissions, scores = random_hmm_instance(
            rng, max_states=4, max_frames=6
        )
        path, _ = viterbi_decode(initial, transitions, emissions, scores)
        scaled = scores * rng.uniform(0.5, 3.0, size=(scores.shape[0], 1))
        path2, _ = viterbi_decode(initial, transitions, emissions, scaled)
        assert np.array_equal(path, path2)

    def test_all_zero_frame_uses_floor(self):
        initial = np.array([0.5, 0.5])
        transitions = np.full((2, 2), 0.5)
        emissions = np.array([[1.0, 0.0], [0.0, 1.0]])
        scores = np.array([[0.0, 0.0], [1.0, 0.0]])
        path, logp = viterbi_decode(initial, transitions, emissions, scores)
        assert np.isfinite(logp)
        assert len(path) == 2

    def test_empty_sequence_rejected(self):
        with pytest.raises(RecognizerError):
            viterbi_decode(
                np.array([1.0]), np.array([[1.0]]), np.array([[1.0]]),
                np.zeros((0, 1)),
            )

    def test_quadratic_scaling_in_state_count(self):
        # decoding cost is O(T * S^2): quadrupling S must not blow past
        # the quadratic envelope (generous slack for constant overheads)
        rng = np.random.default_rng(46)
        frames = 400
        timings = {}
        for n_states in (8, 32):
            initial = rng.dirichlet(np.ones(n_states))
            transitions = rng.dirichlet(np.ones(n_states), size=n_states)
            emissions = rng.dirichlet(np.ones(4), size=n_states)
            scores = rng.dirichlet(np.ones(4), size=frames)
            best = np.inf
            for _ in range(3):
                start = time.perf_counter()
                viterbi_decode(initial, transitions, emissions, scores)
                best = min(best, time.perf_counter() - start)
            timings[n_states] = best
        ratio = timings[32] / timings[8]
        assert ratio <= 4.0 * 16.0, f"scaling ratio {ratio:.1f} beyond quadratic"


class TestAssembleWords:
    def test_single_word(self, alphabet, tiny_lexicon):
        l, a = alphabet.index("l"), alphabet.index("a")
        assert assemble_words([l, l, a, a], tiny_lexicon, alphabet) == ["la"]

    def test_all_silence(self, alphabet, tiny_lexicon):
        sil = alphabet.silence_index
        assert assemble_words([sil] * 5, tiny_lexicon, alphabet) == []

    def test_silence_separated_repeat(self, alphabet, tiny_lexicon):
        l, a, sil = alphabet.index("l"), alphabet.index("a"), alphabet.silence_index
        assert assemble_words(
            [l, a, sil, l, a], tiny_lexicon, alphabet
        ) == ["la", "la"]

    def test_unmatched_phonemes_emit_nothing(self, alphabet, tiny_lexicon):
        x = alphabet.index("x")
        assert assemble_words([x, x, x], tiny_lexicon, alphabet) == []

    def test_collapse_frames(self, alphabet):
        l, a, sil = alphabet.index("l"), alphabet.index("a"), alphabet.silence_index
        assert collapse_frames([sil, l, l, a, sil, sil, a], sil) == [l, a, a]

    def test_round_trip_through_lexicon(self, alphabet, tiny_lexicon):
        rng = np.random.default_rng(47)
        words = tiny_lexicon.words()
        for _ in range(30):
            text = [words[int(rng.integers(len(words)))]
                    for _ in range(int(rng.integers(1, 7)))]
            frames = frames_from_words(rng, text, tiny_lexicon, alphabet)
            assert assemble_words(frames, tiny_lexicon, alphabet) == text

    def test_prefers_fewer_words(self, alphabet):
        lexicon = Lexicon(
            {"lala": ("l", "a", "l", "a"), "la": ("l", "a")}, alphabet
        )
        l, a = alphabet.index("l"), alphabet.index("a")
        assert assemble_words([l, a, l, a], lexicon, alphabet) == ["lala"]


class TestModelContainer:
    def _fitted_pair(self):
        rng = np.random.default_rng(48)
        means = np.eye(3) * 4.0
        X = np.vstack([mu + 0.1 * rng.standard_normal((30, 3)) for mu in means])
        y = np.repeat(np.arange(3), 30)
        bank = LdaVisemeBank().fit(X, y)
        labels = [rng.integers(0, 4, size=20) for _ in range(3)]
        visemes = [rng.integers(0, 3, size=20) for _ in range(3)]
        hmm = PhonemeHmm().fit(labels, visemes, 4, 3)
        vmap = VisemeMap.from_history(4, [(0, 1)])
        return bank, hmm, vmap

    def test_round_trip(self, tmp_path):
        bank, hmm, vmap = self._fitted_pair()
        path = tmp_path / "model.lrm"
        save_model(path, bank, hmm, vmap, fingerprint="ff",
                   feature_fingerprint="aa")
        bank2, hmm2, vmap2, header = load_model(path,
                                                expected_feature_fingerprint="aa")
        assert np.allclose(bank2.directions_, bank.directions_)
        assert np.allclose(hmm2.transitions_, hmm.transitions_)
        assert np.array_equal(vmap2.assignment, vmap.assignment)
        assert vmap2.history == vmap.history
        assert header["fingerprint"] == "ff"

    def test_fingerprint_mismatch_rejected(self, tmp_path):
        bank, hmm, vmap = self._fitted_pair()
        path = tmp_path / "model.lrm"
        save_model(path, bank, hmm, vmap, fingerprint="ff",
                   feature_fingerprint="aa")
        with pytest.raises(RecognizerError, match="fingerprint"):
            load_model(path, expected_feature_fingerprint="bb")

    def test_save_is_deterministic(self, tmp_path):
        bank, hmm, vmap = self._fitted_pair()
        save_model(tmp_path / "a.lrm", bank, hmm, vmap, "ff", "aa")
        save_model(tmp_path / "b.lrm", bank, hmm, vmap, "ff", "aa")
        assert (tmp_path / "a.lrm").read_bytes() == (tmp_path / "b.lrm").read_bytes()


class TestVisemeRecognizer:
    def test_end_to_end_on_separable_clusters(self, alphabet, tiny_lexicon):
        rng = np.random.default_rng(49)
        n_phonemes = len(alphabet)
        means = np.eye(n_phonemes) * 3.0
        vmap = VisemeMap.identity(n_phonemes)
        words = tiny_lexicon.words()
        feature_seqs, label_seqs, texts = [], [], []
        for _ in range(12):
            text = [words[int(rng.integers(len(words)))]
                    for _ in range(int(rng.integers(2, 5)))]
            labels = frames_from_words(rng, text, tiny_lexicon, alphabet)
            feats = means[labels] + 0.2 * rng.standard_normal(
                (labels.size, n_phonemes)
            )
            feature_seqs.append(feats)
            label_seqs.append(labels)
            texts.append(text)
        # coverage sequence so every phoneme class has training frames
        coverage = np.repeat(np.arange(n_phonemes), 6)
        feature_seqs.append(
            means[coverage] + 0.2 * rng.standard_normal((coverage.size, n_phonemes))
        )
        label_seqs.append(coverage)
        recognizer = VisemeRecognizer(viseme_map=vmap).fit(
            feature_seqs, label_seqs
        )
        decoded = recognizer.decode_utterance(
            feature_seqs[0], tiny_lexicon, alphabet, "u0"
        )
        accuracy = np.mean(decoded.frame_phonemes == label_seqs[0])
        assert accuracy > 0.9
        assert decoded.words == texts[0]
