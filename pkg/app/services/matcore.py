"""
Dense symmetric linear algebra: eigendecomposition and the Sylvester solver
behind bidirectional projection learning.

The Sylvester equation M1 W + W M2 = R with symmetric PSD M1, M2 is solved by
simultaneous diagonalization: with M1 = P diag(t1) P^T and M2 = Q diag(t2) Q^T,
W = P [ (P^T R Q)_ij / (t1_i + t2_j) ] Q^T.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from app.utils import config
from app.utils.errors import DataError, SingularSylvesterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EigenPair:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # orthonormal columns


def _check_symmetric(S: np.ndarray, name: str, tol: float) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError(f"{name} must be square, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise DataError(f"{name} has non-finite entries")
    asym = np.abs(S - S.T)
    if asym.size and asym.max() > tol:
        i, j = np.unravel_index(int(asym.argmax()), asym.shape)
        raise DataError(f"{name} is not symmetric: |S[{i},{j}] - S[{j},{i}]| = {asym[i, j]:.3e} > {tol:g}")
    # strip accumulation noise
    return (S + S.T) / 2.0


def sym_eig(S: np.ndarray, tol: float = config.SYM_TOL) -> EigenPair:
    S = _check_symmetric(S, "S", tol)
    values, vectors = linalg.eigh(S)
    return EigenPair(values=values, vectors=vectors)


def solve_sylvester(
    M1: np.ndarray,
    M2: np.ndarray,
    R: np.ndarray,
    tol: float = config.SYLVESTER_TOL,
) -> np.ndarray:
    """
    Solve M1 W + W M2 = R for symmetric PSD M1 (k x k) and M2 (d x d).

    Raises SingularSylvesterError when some eigenvalue pair sums to <= tol
    (relative to the operator scale); the error carries the offending pair.
    """
    R = np.asarray(R, dtype=np.float64)
    e1 = sym_eig(M1)
    e2 = sym_eig(M2)
    k, d = e1.values.shape[0], e2.values.shape[0]
    if R.shape != (k, d):
        raise DataError(f"R has shape {R.shape}, expected {(k, d)}")

    denom = e1.values[:, None] + e2.values[None, :]
    scale = max(1.0, float(np.abs(e1.values).max(initial=0.0) + np.abs(e2.values).max(initial=0.0)))
    if denom.size and denom.min() <= tol * scale:
        i, j = np.unravel_index(int(denom.argmin()), denom.shape)
        raise SingularSylvesterError(
            f"singular Sylvester operator: theta1[{i}] + theta2[{j}] = {denom[i, j]:.3e}",
            pair=(int(i), int(j)),
        )

    R_tilde = e1.vectors.T @ R @ e2.vectors
    return e1.vectors @ (R_tilde / denom) @ e2.vectors.T


def sylvester_residual(M1: np.ndarray, M2: np.ndarray, R: np.ndarray, W: np.ndarray) -> float:
    return float(np.linalg.norm(M1 @ W + W @ M2 - R))


# --- Norm bounds on BPL solutions ---
def w_norm_bound(Y: np.ndarray, X: np.ndarray, lambda4: float) -> float:
    """Upper bound 2 ||Y||_F ||X||_F / lambda4 on ||W||_F for the BPL solution."""
    return 2.0 * float(np.linalg.norm(Y)) * float(np.linalg.norm(X)) / lambda4


def w_sensitivity_bound(Y: np.ndarray, dY: np.ndarray, n_samples: int, lambda4: float) -> float:
    """
    Upper bound on ||dW||_F when Y is perturbed by dY:
        ||dY|| [2 sqrt(N) + C2 (||dY|| + 2 C1)] / lambda4,
    with C1 = ||Y||_F measured and C2 = 2 C1 sqrt(N) / lambda4.
    """
    c1 = float(np.linalg.norm(Y))
    c2 = 2.0 * c1 * np.sqrt(n_samples) / lambda4
    dy = float(np.linalg.norm(dY))
    return dy * (2.0 * np.sqrt(n_samples) + c2 * (dy + 2.0 * c1)) / lambda4
