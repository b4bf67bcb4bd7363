import numpy as np
import pytest

from app.services.dataio import (
    UNLABELED,
    Dataset,
    augment_with_pool,
    load_dataset,
    make_synthetic,
    normalize,
    normalize_features,
    split_generalized,
    write_dataset,
)
from app.services.solver import init_w, train
from app.services.zsleval import evaluate_standard, predict
from app.utils.errors import ConfigError, DataError
from app.utils.models import SolverParams, SyntheticSpec


class TestDataset:
    def test_unannotated_columns_must_be_zero(self):
        with pytest.raises(DataError, match="unannotated image 1"):
            Dataset(X=np.eye(2), Y_init=np.array([[1.0, 0.5], [0.0, 0.0]]), annotated=np.array([True, False]))

    def test_annotated_columns_match_prototypes(self):
        Z_s = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DataError, match="prototypes"):
            Dataset(
                X=np.eye(2),
                Y_init=np.array([[0.0, 0.0], [1.0, 0.0]]),
                annotated=np.array([True, False]),
                labels=np.array([0, 1]),
                Z_s=Z_s,
            )

    def test_column_count_mismatch(self):
        with pytest.raises(DataError, match="column counts"):
            Dataset(X=np.eye(3), Y_init=np.zeros((2, 2)), annotated=np.zeros(2, dtype=bool))

    def test_label_outside_seen_classes(self):
        with pytest.raises(DataError, match="outside"):
            Dataset.from_labels(np.eye(2), [0, 5], [True, False], np.eye(2))


class TestNormalization:
    def test_zero_feature_column(self):
        with pytest.raises(DataError, match="column 1"):
            normalize_features(np.array([[1.0, 0.0], [1.0, 0.0]]))

    def test_normalize_dataset(self, rng):
        X = rng.uniform(0.5, 2.0, (3, 4))
        Z_s = np.array([[2.0, 0.0], [2.0, 3.0]])
        data = normalize(Dataset.from_labels(X, [0, 1, 0, 1], [True, True, False, False], Z_s))
        np.testing.assert_allclose(np.linalg.norm(data.X, axis=0), 1.0)
        np.testing.assert_allclose(np.abs(data.Y_init[:, :2]).sum(axis=0), 1.0)
        np.testing.assert_array_equal(data.Y_init[:, 2:], 0.0)
        assert data.is_normalized()


class TestSynthetic:
    def test_shapes_and_annotation_counts(self, synthetic, small_spec):
        data, test, W_true = synthetic
        assert data.X.shape == (16, 8 * 30)
        assert data.r == 8 * small_spec.K_annotated
        assert (data.p, data.q) == (8, 4)
        assert test.n == 4 * 30
        assert W_true.shape == (10, 16)
        np.testing.assert_allclose(W_true @ W_true.T, np.eye(10), atol=1e-12)
        assert data.is_normalized()

    def test_seeded(self, small_spec):
        a, _, _ = make_synthetic(small_spec)
        b, _, _ = make_synthetic(small_spec)
        np.testing.assert_array_equal(a.X, b.X)
        c, _, _ = make_synthetic(small_spec.model_copy(update={"seed": 2}))
        assert not np.array_equal(a.X, c.X)

    def test_prototypes_distinct(self, synthetic):
        data, _, _ = synthetic
        Z = np.hstack([data.Z_s, data.Z_u])
        assert len({tuple(col) for col in Z.T}) == Z.shape[1]

    def test_pool_images_are_unlabeled(self):
        spec = SyntheticSpec(d=6, k=4, p=3, q=2, images_per_class=5, K_annotated=2, seed=3, pool_size=7)
        data, _, _ = make_synthetic(spec)
        assert data.n_samples == 15 + 7
        np.testing.assert_array_equal(data.labels[-7:], UNLABELED)
        np.testing.assert_array_equal(data.Y_init[:, -7:], 0.0)

    def test_annotated_must_fit_class(self):
        with pytest.raises(ValueError):
            SyntheticSpec(images_per_class=3, K_annotated=4)

    def test_min_separation(self):
        spec = SyntheticSpec(d=8, k=6, p=5, q=3, images_per_class=4, K_annotated=1, seed=5, min_separation=0.3)
        data, _, _ = make_synthetic(spec)
        Z = np.hstack([data.Z_s, data.Z_u])
        dist = np.abs(Z[:, :, None] - Z[:, None, :]).sum(axis=0)
        assert dist[~np.eye(8, dtype=bool)].min() > 0.3

    def test_prototypes_cannot_be_separated(self):
        with pytest.raises(ConfigError, match="separation"):
            make_synthetic(SyntheticSpec(d=4, k=1, p=2, q=1, images_per_class=2, K_annotated=1))

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_noiseless_recovery(self, seed):
        spec = SyntheticSpec(d=8, k=6, p=5, q=3, images_per_class=10, K_annotated=10, noise_std=0.0, seed=seed)
        data, test, _ = make_synthetic(spec)
        W = init_w(data.X, data.Y_init, 0.01)
        report = evaluate_standard(predict(W, test.X, data.Z_u), test.truth, data.q)
        assert report.per_class_accuracy == 1.0


class TestPool:
    def test_augment_normalizes_pool(self, tiny_synthetic):
        data, _, _ = tiny_synthetic
        pool = 3.0 * np.ones((data.d, 2))
        out = augment_with_pool(data, pool)
        np.testing.assert_allclose(np.linalg.norm(out.X[:, -2:], axis=0), 1.0)
        assert out.r == data.r
        assert not out.annotated[-2:].any()

    def test_wrong_dimension(self, tiny_synthetic):
        data, _, _ = tiny_synthetic
        with pytest.raises(DataError):
            augment_with_pool(data, np.ones((data.d + 1, 2)))

    def test_annotated_block_is_untouched(self, tiny_synthetic, rng):
        data, _, _ = tiny_synthetic
        out = augment_with_pool(data, rng.standard_normal((data.d, 5)))
        n = data.n_samples
        np.testing.assert_array_equal(out.X[:, :n], data.X)
        np.testing.assert_array_equal(out.Y_init[:, :n], data.Y_init)
        np.testing.assert_array_equal(out.annotated[:n], data.annotated)
        np.testing.assert_array_equal(out.Y_init[:, n:], 0.0)

    def test_empty_pool_is_identity(self, tiny_synthetic):
        data, _, _ = tiny_synthetic
        assert augment_with_pool(data, np.zeros((data.d, 0))) is data

    def test_annotated_plus_web_counts(self, rng):
        X = normalize_features(rng.standard_normal((4, 750)))
        Y = rng.uniform(0.1, 1.0, (3, 750))
        data = Dataset(X=X, Y_init=Y / Y.sum(axis=0), annotated=np.ones(750, dtype=bool))
        out = augment_with_pool(data, rng.standard_normal((4, 1205)))
        assert (out.n_samples, out.r) == (1955, 750)

    def test_training_keeps_annotated_attributes_with_large_lambda2(self, tiny_synthetic, rng):
        data, _, _ = tiny_synthetic
        out = augment_with_pool(data, rng.standard_normal((data.d, 10)))
        _, state = train(out, SolverParams(lambda2=1e4, graph={"k_g": 5, "m": 6}))
        ann = out.annotated
        np.testing.assert_array_equal(state.Y[:, ann], out.Y_init[:, ann])
        np.testing.assert_array_equal(state.Y[:, :data.n_samples][:, data.annotated], data.Y_init[:, data.annotated])


class TestGeneralizedSplit:
    def test_counts_and_disjointness(self, synthetic):
        data, unseen, _ = synthetic
        train, test = split_generalized(data, 0.2, seed=0, unseen=unseen)
        assert train.n_samples == 8 * 24
        assert test.n == 8 * 6 + unseen.n
        for c in range(8):
            assert np.sum(train.labels == c) == 24
            assert np.sum(test.truth == c) == 6
        # held-out seen columns never appear in training
        held = {tuple(col) for col in test.X[:, :48].T}
        assert not held & {tuple(col) for col in train.X.T}
        np.testing.assert_array_equal(np.unique(test.truth[48:]), np.arange(8, 12))

    def test_annotations_are_kept(self, synthetic):
        data, _, _ = synthetic
        train, _ = split_generalized(data, 0.2, seed=0)
        assert train.r == data.r

    def test_seeded(self, synthetic):
        data, _, _ = synthetic
        a, _ = split_generalized(data, 0.2, seed=5)
        b, _ = split_generalized(data, 0.2, seed=5)
        np.testing.assert_array_equal(a.X, b.X)

    def test_tiny_class_stays_whole(self, caplog):
        X = np.eye(3)
        data = Dataset.from_labels(X, [0, 0, 1], [True, False, True], np.eye(3)[:, :2])
        train, test = split_generalized(data, 0.5, seed=0)
        assert train.n_samples == 2
        np.testing.assert_array_equal(test.truth, [0])
        assert "kept whole" in caplog.text

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1])
    def test_fraction_range(self, synthetic, fraction):
        data, _, _ = synthetic
        with pytest.raises(ConfigError):
            split_generalized(data, fraction, seed=0)


class TestFiles:
    def test_write_then_load(self, tiny_synthetic, tmp_path):
        data, test, _ = tiny_synthetic
        manifest = write_dataset(tmp_path, data, test)
        loaded, loaded_test = load_dataset(manifest)
        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.annotated, data.annotated)
        np.testing.assert_array_equal(loaded.Z_u, data.Z_u)
        np.testing.assert_array_equal(loaded_test.truth, test.truth)

    def test_initial_attributes_mode(self, tmp_path):
        X = np.eye(3)
        Y = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        manifest = write_dataset(tmp_path, Dataset(X=X, Y_init=Y, annotated=np.array([True, False, True])))
        loaded, test = load_dataset(manifest)
        assert test is None
        assert loaded.Z_s is None
        np.testing.assert_array_equal(loaded.Y_init, Y)

    def test_missing_keys(self, tmp_path):
        (tmp_path / "manifest.txt").write_text("features=f.txt\n")
        (tmp_path / "f.txt").write_text("1 2\n1 2\n")
        with pytest.raises(DataError, match="lacks"):
            load_dataset(tmp_path / "manifest.txt")
