import numpy as np
import pytest

from app.services.zsleval import evaluate_generalized, evaluate_standard, harmonic_mean, predict
from app.utils.errors import DataError


class TestPredict:
    def test_nearest_projected_prototype(self):
        Z = np.eye(3)
        X = np.array([[0.9, 0.0, 0.1], [0.1, 0.0, 0.0], [0.0, 1.0, 0.8]])
        np.testing.assert_array_equal(predict(np.eye(3), X, Z), [0, 2, 2])

    def test_ties_go_to_lower_index(self):
        Z = np.array([[1.0, 1.0], [0.0, 0.0]])
        assert predict(np.eye(2), np.array([[1.0], [0.0]]), Z)[0] == 0

    def test_empty_test_set(self):
        assert predict(np.eye(2), np.zeros((2, 0)), np.eye(2)).shape == (0,)

    def test_attribute_mismatch(self):
        with pytest.raises(DataError, match="attributes"):
            predict(np.ones((3, 2)), np.ones((2, 4)), np.ones((4, 2)))

    def test_feature_mismatch(self):
        with pytest.raises(DataError, match="features"):
            predict(np.ones((2, 3)), np.ones((4, 1)), np.ones((2, 2)))

    def test_no_prototypes(self):
        with pytest.raises(DataError):
            predict(np.eye(2), np.ones((2, 1)), np.zeros((2, 0)))

    def test_matches_explicit_distances(self, rng):
        W = rng.standard_normal((3, 5))
        X = rng.standard_normal((5, 10))
        Z = rng.standard_normal((3, 4))
        expected = [
            int(np.argmin([np.sum((X[:, i] - W.T @ Z[:, j]) ** 2) for j in range(4)])) for i in range(10)
        ]
        np.testing.assert_array_equal(predict(W, X, Z), expected)

    def test_test_point_order(self, rng):
        W, X, Z = rng.standard_normal((3, 5)), rng.standard_normal((5, 12)), rng.standard_normal((3, 4))
        perm = rng.permutation(12)
        np.testing.assert_array_equal(predict(W, X[:, perm], Z), predict(W, X, Z)[perm])

    def test_prototype_order(self, rng):
        W, X, Z = rng.standard_normal((3, 5)), rng.standard_normal((5, 12)), rng.standard_normal((3, 4))
        perm = rng.permutation(4)
        np.testing.assert_array_equal(perm[predict(W, X, Z[:, perm])], predict(W, X, Z))


class TestMetrics:
    def test_per_class_differs_from_per_sample(self):
        report = evaluate_standard([0, 0, 0, 0], [0, 0, 0, 1], class_count=2)
        assert report.per_sample_accuracy == pytest.approx(0.75)
        assert report.per_class_accuracy == pytest.approx(0.5)

    def test_absent_classes_are_skipped(self):
        report = evaluate_standard([0, 1], [0, 1], class_count=5)
        assert report.per_class_accuracy == 1.0

    @pytest.mark.parametrize(
        "acc_u, acc_s, expected",
        [(0.5, 0.5, 0.5), (0.0, 0.7, 0.0), (0.7, 0.0, 0.0), (1.0, 0.5, 2 / 3), (None, 0.4, 0.0)],
    )
    def test_harmonic_mean(self, acc_u, acc_s, expected):
        assert harmonic_mean(acc_u, acc_s) == pytest.approx(expected)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            evaluate_standard([0, 1], [0], class_count=2)


class TestGeneralized:
    def test_partitions(self):
        # seen classes 0, 1 and unseen class 2; identity projection
        Z = np.eye(3)
        X = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        truth = [0, 1, 2, 2]
        report = evaluate_generalized(np.eye(3), X, truth, Z, seen_classes=[0, 1])
        assert report.acc_s == 1.0
        assert report.acc_u == 0.5
        assert report.harmonic_mean == pytest.approx(2 * 0.5 / 1.5)
        assert report.per_sample_accuracy == 0.75

    def test_empty_unseen_partition(self, caplog):
        report = evaluate_generalized(np.eye(2), np.eye(2), [0, 1], np.eye(2), seen_classes=[0, 1])
        assert report.acc_u is None
        assert report.harmonic_mean == 0.0
        assert "empty unseen partition" in caplog.text

    def test_without_seen_classes_matches_standard(self, rng):
        W, X, Z = rng.standard_normal((3, 5)), rng.standard_normal((5, 20)), rng.standard_normal((3, 4))
        truth = rng.integers(0, 4, size=20)
        report = evaluate_generalized(W, X, truth, Z, seen_classes=[])
        standard = evaluate_standard(predict(W, X, Z), truth, 4)
        assert report.per_sample_accuracy == standard.per_sample_accuracy
        assert report.per_class_accuracy == standard.per_class_accuracy
        assert report.acc_u == standard.per_class_accuracy
        assert report.acc_s is None
        assert report.harmonic_mean == 0.0
