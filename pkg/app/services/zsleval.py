import logging
from typing import Iterable, Optional

import numpy as np
from scipy.spatial.distance import cdist

from app.utils.errors import DataError
from app.utils.models import EvalReport

logger = logging.getLogger(__name__)


def predict(W: np.ndarray, X_test: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """
    Label of each test column x: argmin_j ||x - W^T z_j||^2, computed in feature
    space. Ties go to the lowest class index.
    """
    if Z.ndim != 2 or Z.shape[1] == 0:
        raise DataError("no class prototypes to predict with")
    if W.shape[0] != Z.shape[0]:
        raise DataError(f"W maps to {W.shape[0]} attributes but prototypes have {Z.shape[0]}")
    if W.shape[1] != X_test.shape[0]:
        raise DataError(f"W expects {W.shape[1]}-d features, test features are {X_test.shape[0]}-d")
    if X_test.shape[1] == 0:
        return np.zeros(0, dtype=int)
    dist = cdist(X_test.T, (W.T @ Z).T, "sqeuclidean")
    return np.argmin(dist, axis=1)


def _per_class_mean(labels: np.ndarray, truth: np.ndarray, classes: Iterable[int]) -> Optional[float]:
    accs = []
    for c in classes:
        mask = truth == c
        if mask.any():
            accs.append(float(np.mean(labels[mask] == c)))
    return float(np.mean(accs)) if accs else None


def harmonic_mean(acc_u: Optional[float], acc_s: Optional[float]) -> float:
    if not acc_u or not acc_s:
        return 0.0
    return 2.0 * acc_u * acc_s / (acc_u + acc_s)


def evaluate_standard(labels, truth, class_count: int) -> EvalReport:
    """Per-sample accuracy and mean per-class accuracy (classes absent from truth are skipped)."""
    labels, truth = np.asarray(labels, dtype=int), np.asarray(truth, dtype=int)
    if labels.shape != truth.shape:
        raise DataError(f"{labels.size} predictions for {truth.size} ground-truth labels")
    if truth.size == 0:
        return EvalReport()
    return EvalReport(
        per_sample_accuracy=float(np.mean(labels == truth)),
        per_class_accuracy=_per_class_mean(labels, truth, range(class_count)),
    )


def evaluate_generalized(
    W: np.ndarray,
    X_test: np.ndarray,
    truth,
    Z_joint: np.ndarray,
    seen_classes: Iterable[int],
) -> EvalReport:
    """
    Predict over the joint label space, then score unseen-truth and seen-truth
    samples separately (mean per-class accuracy within each partition).
    """
    truth = np.asarray(truth, dtype=int)
    labels = predict(W, X_test, Z_joint)
    report = evaluate_standard(labels, truth, Z_joint.shape[1])

    seen = set(int(c) for c in seen_classes)
    unseen = [c for c in range(Z_joint.shape[1]) if c not in seen]
    acc_s = _per_class_mean(labels, truth, sorted(seen))
    acc_u = _per_class_mean(labels, truth, unseen)
    if acc_s is None or acc_u is None:
        logger.warning(
            "generalized evaluation has an empty %s partition; harmonic mean reported as 0",
            "seen" if acc_s is None else "unseen",
        )
    return report.model_copy(update={"acc_u": acc_u, "acc_s": acc_s, "harmonic_mean": harmonic_mean(acc_u, acc_s)})
