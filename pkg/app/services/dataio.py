import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from app.utils.errors import ConfigError, DataError
from app.utils.matrix_io import load_matrix, read_manifest, save_matrix, write_manifest
from app.utils.models import SyntheticSpec

logger = logging.getLogger(__name__)

UNLABELED = -1


@dataclass(frozen=True)
class Dataset:
    """
    Seen-class training data. Columns are images.

    X:         d x N_s features
    Y_init:    k x N_s initial attributes, exact zero columns for unannotated images
    annotated: N_s boolean mask (r = annotated.sum())
    labels:    optional N_s seen-class indices, UNLABELED for unknown (e.g. pool images)
    Z_s, Z_u:  optional k x p / k x q class prototypes (absent in tag-refinement mode)
    """

    X: np.ndarray
    Y_init: np.ndarray
    annotated: np.ndarray
    labels: Optional[np.ndarray] = None
    Z_s: Optional[np.ndarray] = None
    Z_u: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.X.shape[1]
        if self.Y_init.shape[1] != n or self.annotated.shape != (n,):
            raise DataError(
                f"column counts disagree: X {self.X.shape}, Y_init {self.Y_init.shape}, mask {self.annotated.shape}"
            )
        if self.labels is not None and self.labels.shape != (n,):
            raise DataError(f"labels has shape {self.labels.shape}, expected ({n},)")
        for name, Z in (("Z_s", self.Z_s), ("Z_u", self.Z_u)):
            if Z is not None and (Z.shape[0] != self.k or Z.shape[1] < 1):
                raise DataError(f"{name} has shape {Z.shape}, expected ({self.k}, >=1)")

        unannotated = ~self.annotated
        if np.any(self.Y_init[:, unannotated]):
            bad = int(np.flatnonzero(unannotated & np.any(self.Y_init != 0, axis=0))[0])
            raise DataError(f"unannotated image {bad} has a nonzero attribute column")

        if self.labels is not None and self.Z_s is not None:
            if self.labels.max(initial=UNLABELED) >= self.p:
                raise DataError(f"label {int(self.labels.max())} outside the {self.p} seen classes")
            known = self.annotated & (self.labels >= 0)
            expected = self.Z_s[:, self.labels[known]]
            if not np.allclose(self.Y_init[:, known], expected, rtol=0, atol=1e-12):
                raise DataError("annotated attribute columns must equal their class prototypes")

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.Y_init.shape[0]

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]

    @property
    def r(self) -> int:
        return int(self.annotated.sum())

    @property
    def p(self) -> int:
        return 0 if self.Z_s is None else self.Z_s.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.Z_u is None else self.Z_u.shape[1]

    @classmethod
    def from_labels(cls, X, labels, annotated, Z_s, Z_u=None) -> "Dataset":
        labels = np.asarray(labels, dtype=int)
        annotated = np.asarray(annotated, dtype=bool)
        Y_init = np.zeros((Z_s.shape[0], X.shape[1]))
        known = annotated & (labels >= 0)
        if np.any(annotated & (labels < 0)):
            raise DataError("annotated images need a seen-class label")
        Y_init[:, known] = Z_s[:, labels[known]]
        return cls(X=X, Y_init=Y_init, annotated=annotated, labels=labels, Z_s=Z_s, Z_u=Z_u)

    def subset(self, idx: np.ndarray) -> "Dataset":
        return replace(
            self,
            X=self.X[:, idx],
            Y_init=self.Y_init[:, idx],
            annotated=self.annotated[idx],
            labels=None if self.labels is None else self.labels[idx],
        )

    def is_normalized(self, tol: float = 1e-8) -> bool:
        if np.any(np.abs(np.linalg.norm(self.X, axis=0) - 1.0) > tol):
            return False
        l1 = np.abs(self.Y_init).sum(axis=0)
        return bool(np.all(np.abs(l1[l1 > 0] - 1.0) <= tol))


@dataclass(frozen=True)
class TestSet:
    X: np.ndarray  # d x N_u
    truth: np.ndarray  # class index per image

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.truth.shape != (self.X.shape[1],):
            raise DataError(f"truth has shape {self.truth.shape}, expected ({self.X.shape[1]},)")

    @property
    def n(self) -> int:
        return self.X.shape[1]


# ---------- normalization ----------

def normalize_features(X: np.ndarray) -> np.ndarray:
    """Unit L2 norm per column; a zero column cannot be normalized."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DataError(f"feature column {int(zero[0])} is the zero vector and cannot be normalized")
    return X / norms


def normalize_l1(Y: np.ndarray) -> np.ndarray:
    """Unit L1 norm per nonzero column; zero columns stay zero."""
    Y = np.asarray(Y, dtype=np.float64)
    norms = np.abs(Y).sum(axis=0)
    out = Y.copy()
    nz = norms > 0
    out[:, nz] = Y[:, nz] / norms[nz]
    return out


def normalize(data: Dataset) -> Dataset:
    return replace(
        data,
        X=normalize_features(data.X),
        Y_init=normalize_l1(data.Y_init),
        Z_s=None if data.Z_s is None else normalize_l1(data.Z_s),
        Z_u=None if data.Z_u is None else normalize_l1(data.Z_u),
    )


# ---------- external pool ----------

def augment_with_pool(data: Dataset, pool_X: np.ndarray) -> Dataset:
    """
    Append unannotated pool images (e.g. web images) with zero attribute columns.
    Pool columns are L2-normalized on their own.
    """
    pool_X = np.asarray(pool_X, dtype=np.float64)
    if pool_X.ndim != 2 or pool_X.shape[0] != data.d:
        raise DataError(f"pool features have shape {pool_X.shape}, expected ({data.d}, n)")
    n_pool = pool_X.shape[1]
    if n_pool == 0:
        return data

    logger.info("appending %d unannotated pool images to %d training images", n_pool, data.n_samples)
    return replace(
        data,
        X=np.hstack([data.X, normalize_features(pool_X)]),
        Y_init=np.hstack([data.Y_init, np.zeros((data.k, n_pool))]),
        annotated=np.concatenate([data.annotated, np.zeros(n_pool, dtype=bool)]),
        labels=None if data.labels is None else np.concatenate([data.labels, np.full(n_pool, UNLABELED)]),
    )


# ---------- synthetic data ----------

def _draw_prototypes(
    rng: np.random.Generator, k: int, n_classes: int, density: float, min_separation: float = 0.0
) -> np.ndarray:
    """L1-normalized prototypes, redrawn until every pair is more than `min_separation` apart in L1."""
    for _ in range(100):
        Z = np.where(rng.random((k, n_classes)) < density, rng.uniform(0.1, 1.0, (k, n_classes)), 0.0)
        empty = np.flatnonzero(~Z.any(axis=0))
        Z[rng.integers(0, k, size=empty.size), empty] = rng.uniform(0.1, 1.0, size=empty.size)
        Z = normalize_l1(Z)
        dist = np.abs(Z[:, :, None] - Z[:, None, :]).sum(axis=0)
        np.fill_diagonal(dist, np.inf)
        if dist.min() > min_separation:
            return Z
    raise ConfigError(
        f"could not draw {n_classes} prototypes in {k} dimensions with L1 separation > {min_separation}"
    )


def make_synthetic(spec: SyntheticSpec) -> tuple[Dataset, TestSet, np.ndarray]:
    """
    Seeded desk-scale ZSL problem following the model's own bilinear assumption:
    x = W_true^T z_class + noise, then L2-normalized.

    Returns (training Dataset with K_annotated per seen class and optional pool,
    unseen-class TestSet, W_true).
    """
    rng = np.random.default_rng(spec.seed)
    Z = _draw_prototypes(rng, spec.k, spec.p + spec.q, spec.density, spec.min_separation)
    Z_s, Z_u = Z[:, : spec.p], Z[:, spec.p :]

    if spec.k <= spec.d:
        Q, _ = np.linalg.qr(rng.standard_normal((spec.d, spec.k)))
        W_true = Q.T  # orthonormal rows
    else:
        W_true = rng.standard_normal((spec.k, spec.d)) / np.sqrt(spec.d)

    def images(Zc: np.ndarray, labels: np.ndarray) -> np.ndarray:
        clean = W_true.T @ Zc[:, labels]
        return normalize_features(clean + spec.noise_std * rng.standard_normal(clean.shape))

    labels = np.repeat(np.arange(spec.p), spec.images_per_class)
    annotated = np.tile(np.arange(spec.images_per_class) < spec.K_annotated, spec.p)
    data = Dataset.from_labels(images(Z_s, labels), labels, annotated, Z_s, Z_u)

    n_test = spec.test_images_per_class or spec.images_per_class
    test_truth = np.repeat(np.arange(spec.q), n_test)
    test = TestSet(X=images(Z_u, test_truth), truth=test_truth)

    if spec.pool_size:
        pool_labels = rng.integers(0, spec.p, size=spec.pool_size)
        data = augment_with_pool(data, images(Z_s, pool_labels))

    return data, test, W_true


# ---------- generalized split ----------

def split_generalized(
    data: Dataset,
    holdout_fraction: float,
    seed: int,
    unseen: Optional[TestSet] = None,
) -> tuple[Dataset, TestSet]:
    """
    Hold out a seeded fraction of each seen class for the generalized test set.
    Held-out images are drawn from a class's unannotated images first. Labels of
    the returned test set live in the joint space: seen 0..p-1, unseen p..p+q-1
    (when `unseen` is given it is appended with its labels shifted by p).
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    if data.labels is None or data.Z_s is None:
        raise DataError("generalized split needs per-image seen-class labels and prototypes")

    rng = np.random.default_rng(seed)
    held = []
    for c in range(data.p):
        idx = np.flatnonzero(data.labels == c)
        if idx.size < 2:
            logger.warning("class %d has %d image(s), kept whole in training", c, idx.size)
            continue
        n_hold = int(np.floor(holdout_fraction * idx.size + 1e-9))
        perm = rng.permutation(idx)
        perm = perm[np.argsort(data.annotated[perm], kind="stable")]
        chosen = perm[:n_hold]
        if data.annotated[chosen].any():
            logger.warning("class %d: holdout takes %d annotated image(s)", c, int(data.annotated[chosen].sum()))
        held.append(chosen)

    held_idx = np.sort(np.concatenate(held)) if held else np.zeros(0, dtype=int)
    keep = np.setdiff1d(np.arange(data.n_samples), held_idx)

    X_test, truth = data.X[:, held_idx], data.labels[held_idx]
    if unseen is not None:
        X_test = np.hstack([X_test, unseen.X])
        truth = np.concatenate([truth, unseen.truth + data.p])
    return data.subset(keep), TestSet(X=X_test, truth=truth.astype(int))


# ---------- files ----------

def _as_vector(M: np.ndarray, name: str) -> np.ndarray:
    if min(M.shape) > 1:
        raise DataError(f"{name} must be a single row or column, got shape {M.shape}")
    return M.ravel()


def _as_int_vector(M: np.ndarray, name: str) -> np.ndarray:
    v = _as_vector(M, name)
    if not np.all(v == np.round(v)):
        raise DataError(f"{name} must hold integers")
    return v.astype(int)


def load_dataset(manifest: str | Path) -> tuple[Dataset, Optional[TestSet]]:
    """Load a manifest-described dataset (not normalized)."""
    files = read_manifest(manifest)
    if "features" not in files:
        raise DataError(f"{manifest}: manifest lacks 'features'")
    X = load_matrix(files["features"])

    labels = _as_int_vector(load_matrix(files["labels"]), "labels") if "labels" in files else None
    mask = _as_vector(load_matrix(files["annotated_mask"]), "annotated_mask") != 0 if "annotated_mask" in files else None
    Z_s = load_matrix(files["prototypes_seen"]) if "prototypes_seen" in files else None
    Z_u = load_matrix(files["prototypes_unseen"]) if "prototypes_unseen" in files else None

    if "initial_attributes" in files:
        Y_init = load_matrix(files["initial_attributes"])
        if mask is None:
            mask = np.any(Y_init != 0, axis=0)
        data = Dataset(X=X, Y_init=Y_init, annotated=mask, labels=labels, Z_s=Z_s, Z_u=Z_u)
    else:
        missing = [key for key in ("labels", "annotated_mask", "prototypes_seen") if key not in files]
        if missing:
            raise DataError(f"{manifest}: manifest lacks {missing}")
        data = Dataset.from_labels(X, labels, mask, Z_s, Z_u)

    if "pool_features" in files:
        data = augment_with_pool(data, load_matrix(files["pool_features"]))

    test = None
    if "test_features" in files and "test_labels" in files:
        test = TestSet(
            X=load_matrix(files["test_features"]),
            truth=_as_int_vector(load_matrix(files["test_labels"]), "test_labels"),
        )
    return data, test


def write_dataset(out_dir: str | Path, data: Dataset, test: Optional[TestSet] = None) -> Path:
    """Write matrix files plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    entries = {"features": "features.txt"}
    save_matrix(out_dir / "features.txt", data.X)
    save_matrix(out_dir / "annotated_mask.txt", data.annotated.astype(float)[None, :])
    entries["annotated_mask"] = "annotated_mask.txt"
    if data.labels is not None and data.Z_s is not None:
        save_matrix(out_dir / "labels.txt", data.labels.astype(float)[None, :])
        save_matrix(out_dir / "prototypes_seen.txt", data.Z_s)
        entries.update(labels="labels.txt", prototypes_seen="prototypes_seen.txt")
    else:
        save_matrix(out_dir / "initial_attributes.txt", data.Y_init)
        entries["initial_attributes"] = "initial_attributes.txt"
    if data.Z_u is not None:
        save_matrix(out_dir / "prototypes_unseen.txt", data.Z_u)
        entries["prototypes_unseen"] = "prototypes_unseen.txt"
    if test is not None:
        save_matrix(out_dir / "test_features.txt", test.X)
        save_matrix(out_dir / "test_labels.txt", test.truth.astype(float)[None, :])
        entries.update(test_features="test_features.txt", test_labels="test_labels.txt")
    return write_manifest(out_dir / "manifest.txt", entries)
