#!/usr/bin/env python
# this_file: tests/test_downstream.py
"""Tests for the template probe, k-NN and error rates."""

import numpy as np
import pytest

import actkit
from actkit.augmentation import AugmentationSet, sample_pair
from actkit.downstream import (
    LabeledSet,
    ProbeModel,
    error_rate,
    evaluate_downstream,
    fit_linear_probe,
    knn_predict,
    knn_predict_batch,
    predict_probe,
    predict_probe_batch,
    write_report,
)
from actkit.encoder import EncoderParams, forward


def _relu_encoder(d, scale=1.0):
    """f(x) = scale · max(x, 0) when used without projection."""
    eye = np.eye(d)
    return EncoderParams((eye, scale * eye), (np.zeros(d),))


def _constant_encoder(d, d_star):
    return EncoderParams((np.zeros((d, d)), np.zeros((d_star, d))), (np.zeros(d),))


class TestLabeledSet:
    """Test labeled-set validation."""

    def test_label_range(self):
        """Test that labels outside 0..K-1 are refused."""
        with pytest.raises(actkit.DataError):
            LabeledSet(np.zeros((2, 2)), [0, 3], 3)

    def test_length_mismatch(self):
        """Test that every sample needs a label."""
        with pytest.raises(actkit.DataError):
            LabeledSet(np.zeros((3, 2)), [0, 1], 2)

    def test_class_counts(self):
        """Test per-class counts including empty classes."""
        data = LabeledSet(np.zeros((4, 2)), [0, 2, 2, 0], 4)
        np.testing.assert_array_equal(data.class_counts(), [2, 0, 2, 0])


class TestFitProbe:
    """Test template construction."""

    def test_one_sample_per_class_identity_views(self, rng):
        """Test μ̂_t(k) = f(z_k) when both views equal the sample."""
        f = _relu_encoder(3)
        samples = np.abs(rng.normal(size=(3, 3)))
        probe = fit_linear_probe(f, LabeledSet(samples, [0, 1, 2], 3), AugmentationSet.identity(3), rng, project=False)
        np.testing.assert_allclose(probe.W_hat, samples)
        assert probe.class_counts == (1, 1, 1)

    def test_constant_encoder(self, aug_set, rng):
        """Test that a constant encoder gives identical rows."""
        f = _constant_encoder(6, 3)
        probe = fit_linear_probe(f, LabeledSet(rng.normal(size=(6, 6)), [0, 1, 2, 0, 1, 2], 3), aug_set, rng)
        np.testing.assert_allclose(probe.W_hat, np.tile([1.0, 0.0, 0.0], (3, 1)))

    def test_matches_loop_oracle(self, small_encoder):
        """Test against independent accumulation over the same generator stream."""
        family = AugmentationSet.from_specs([("noise", 0.2, 1), ("mask", 0.34, 2)], 6)
        data_rng = np.random.default_rng(8)
        samples = data_rng.normal(size=(12, 6))
        labels = np.repeat([0, 1, 2], 4)
        data_rng.shuffle(labels)
        probe = fit_linear_probe(small_encoder, LabeledSet(samples, labels, 3), family, np.random.default_rng(21))

        oracle_rng = np.random.default_rng(21)
        expected = np.zeros((3, 3))
        for z, y in zip(samples, labels):
            z1, z2 = sample_pair(family, z, oracle_rng)
            expected[y] += (forward(small_encoder, z1) + forward(small_encoder, z2)) / 8.0
        np.testing.assert_allclose(probe.W_hat, expected, atol=1e-12)

    def test_rows_depend_only_on_their_class(self, small_encoder, aug_set, rng):
        """Test that changing class-1 samples leaves row 0 bit-identical."""
        samples = rng.normal(size=(6, 6))
        labels = [0, 1, 0, 1, 0, 1]
        moved = samples.copy()
        moved[1::2] += 5.0
        a = fit_linear_probe(small_encoder, LabeledSet(samples, labels, 2), aug_set, np.random.default_rng(0))
        b = fit_linear_probe(small_encoder, LabeledSet(moved, labels, 2), aug_set, np.random.default_rng(0))
        np.testing.assert_array_equal(a.W_hat[0], b.W_hat[0])
        assert not np.array_equal(a.W_hat[1], b.W_hat[1])

    def test_empty_class_named(self, small_encoder, aug_set, rng):
        """Test that an empty class raises DataError naming it."""
        with pytest.raises(actkit.DataError, match="class 2"):
            fit_linear_probe(small_encoder, LabeledSet(rng.normal(size=(4, 6)), [0, 1, 0, 1], 3), aug_set, rng)


class TestPredictProbe:
    """Test probe prediction and its tie rule."""

    def test_orthonormal_rows(self):
        """Test that f(z) equal to a row selects that class."""
        probe = ProbeModel(np.eye(3), (1, 1, 1))
        assert predict_probe(probe, _relu_encoder(3), np.array([0.0, 1.0, 0.0]), project=False) == 1

    def test_all_tie_goes_to_first_class(self):
        """Test that Ŵ = 0 predicts class 0."""
        probe = ProbeModel(np.zeros((4, 3)), (1, 1, 1, 1))
        assert predict_probe(probe, _relu_encoder(3), np.ones(3), project=False) == 0

    def test_brute_force_argmax(self, small_encoder, rng):
        """Test against an explicit max over classes."""
        for _ in range(25):
            probe = ProbeModel(rng.normal(size=(4, 3)), (1, 1, 1, 1))
            z = rng.normal(size=6)
            rep = forward(small_encoder, z)
            scores = [float(row @ rep) for row in probe.W_hat]
            assert predict_probe(probe, small_encoder, z) == scores.index(max(scores))

    def test_batch_matches_single(self, small_encoder, rng):
        """Test that batch prediction agrees with per-query prediction."""
        probe = ProbeModel(rng.normal(size=(3, 3)), (1, 1, 1))
        queries = rng.normal(size=(10, 6))
        expected = [predict_probe(probe, small_encoder, q) for q in queries]
        np.testing.assert_array_equal(predict_probe_batch(probe, small_encoder, queries), expected)

    def test_positive_rescaling_invariance(self, rng):
        """Test that scaling f by c > 0 leaves predictions unchanged."""
        samples = np.abs(rng.normal(size=(6, 3)))
        target = LabeledSet(samples, [0, 1, 2, 0, 1, 2], 3)
        family = AugmentationSet.identity(3)
        f, g = _relu_encoder(3), _relu_encoder(3, scale=2.5)
        pf = fit_linear_probe(f, target, family, np.random.default_rng(0), project=False)
        pg = fit_linear_probe(g, target, family, np.random.default_rng(0), project=False)
        queries = np.abs(rng.normal(size=(20, 3)))
        np.testing.assert_array_equal(
            predict_probe_batch(pf, f, queries, project=False), predict_probe_batch(pg, g, queries, project=False)
        )


def _knn_oracle(reps, labels, query, k):
    dists = sorted((float(np.linalg.norm(r - query)), i) for i, r in enumerate(reps))[:k]
    votes: dict[int, int] = {}
    for _, i in dists:
        votes[int(labels[i])] = votes.get(int(labels[i]), 0) + 1
    best = max(votes.values())
    for _, i in dists:
        if votes[int(labels[i])] == best:
            return int(labels[i])
    raise AssertionError


class TestKnn:
    """Test k-nearest-neighbour prediction."""

    def test_query_on_training_point(self, rng):
        """Test that k = 1 returns the label of an exact match."""
        reps = rng.normal(size=(8, 3))
        labels = np.array([0, 1, 2, 0, 1, 2, 0, 1])
        for i in range(8):
            assert knn_predict(reps, labels, reps[i], 1) == labels[i]

    def test_global_majority(self, rng):
        """Test that k = n returns the majority class."""
        assert knn_predict(rng.normal(size=(4, 2)), [1, 1, 0, 1], rng.normal(size=2), 4) == 1

    def test_vote_tie_goes_to_nearest_class(self):
        """Test that a tied vote picks the class with the closest member."""
        reps = np.array([[2.0, 0.0], [1.0, 0.0]])
        assert knn_predict(reps, [0, 1], np.zeros(2), 2) == 1

    def test_distance_tie_goes_to_smaller_index(self):
        """Test that equidistant neighbours are taken in index order."""
        reps = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        assert knn_predict(reps, [2, 0, 1], np.zeros(2), 1) == 2

    def test_brute_force_oracle(self):
        """Test 20 random points with k = 5 against a sort-based oracle."""
        rng = np.random.default_rng(4)
        reps = rng.normal(size=(20, 3))
        labels = rng.integers(0, 3, size=20)
        queries = rng.normal(size=(30, 3))
        expected = [_knn_oracle(reps, labels, q, 5) for q in queries]
        np.testing.assert_array_equal(knn_predict_batch(reps, labels, queries, 5), expected)

    def test_invalid_inputs(self):
        """Test empty training sets and out-of-range k."""
        with pytest.raises(actkit.DataError):
            knn_predict(np.zeros((0, 2)), [], np.zeros(2), 1)
        with pytest.raises(actkit.DataError):
            knn_predict(np.zeros((3, 2)), [0, 1, 0], np.zeros(2), 4)


class TestErrorRate:
    """Test the misclassification rate."""

    def test_examples(self):
        """Test all-correct, all-wrong and partial cases."""
        truth = np.arange(12) % 3
        assert error_rate(truth, truth) == 0.0
        assert error_rate((truth + 1) % 3, truth) == 1.0
        wrong = truth.copy()
        wrong[:3] = (wrong[:3] + 1) % 3
        assert error_rate(wrong, truth) == 0.25

    def test_invalid(self):
        """Test length mismatch and empty inputs."""
        with pytest.raises(actkit.DataError):
            error_rate([0, 1], [0])
        with pytest.raises(actkit.DataError):
            error_rate([], [])


class TestEvaluate:
    """Test the combined evaluation and its report."""

    def test_rows_and_report(self, small_encoder, aug_set, rng, tmp_path):
        """Test the probe and k-NN rows and the CSV layout."""
        target = LabeledSet(rng.normal(size=(9, 6)), [0, 1, 2] * 3, 3)
        test = LabeledSet(rng.normal(size=(15, 6)), [0, 1, 2] * 5, 3)
        rows = evaluate_downstream(small_encoder, target, test, aug_set, rng, knn_k=3)
        assert [(r.protocol, r.k) for r in rows] == [("probe", 0), ("knn", 3)]
        assert all(0.0 <= r.error <= 1.0 for r in rows)
        assert rows[0].accuracy == pytest.approx(1.0 - rows[0].error)

        lines = write_report(rows, tmp_path / "evaluation.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "protocol,k,class_counts,error,accuracy"
        assert lines[1].startswith("probe,0,3;3;3,")
        assert lines[2].startswith("knn,3,3;3;3,")

    def test_class_count_mismatch(self, small_encoder, aug_set, rng):
        """Test that target and test sets must share K."""
        target = LabeledSet(rng.normal(size=(4, 6)), [0, 1, 0, 1], 2)
        test = LabeledSet(rng.normal(size=(3, 6)), [0, 1, 2], 3)
        with pytest.raises(actkit.DataError):
            evaluate_downstream(small_encoder, target, test, aug_set, rng)
