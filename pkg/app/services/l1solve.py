"""
Weighted-L1 quadratic problems

    minimize  1/2 x^T H x + g^T x + sum_i w_i |x_i|,   H symmetric positive definite,

solved by cyclic coordinate descent with exact per-coordinate updates.

Factor convention: ||A x - b||^2 + lam |x|_1 maps to H = 2 A^T A, g = -2 A^T b, w = lam.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from app.utils import config
from app.utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadLassoProblem:
    H: np.ndarray
    g: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = self.g.shape[0]
        if self.H.shape != (n, n) or self.weights.shape != (n,):
            raise DataError(
                f"inconsistent shapes H={self.H.shape}, g={self.g.shape}, weights={self.weights.shape}"
            )
        if np.any(self.weights < 0):
            raise DataError("L1 weights must be nonnegative")
        asym = np.abs(self.H - self.H.T).max(initial=0.0)
        if asym > config.SYM_TOL * max(1.0, np.abs(self.H).max(initial=0.0)):
            raise DataError(f"H is not symmetric (max asymmetry {asym:.3e})")
        if n:
            try:
                linalg.cholesky(self.H, lower=True)
            except linalg.LinAlgError as e:
                raise DataError(f"H must be positive definite: {e}") from e

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x + np.sum(self.weights * np.abs(x)))


@dataclass(frozen=True)
class LassoSolution:
    x: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class BatchLassoSolution:
    """Solutions for many linear terms sharing H and weights (one per column)."""

    X: np.ndarray
    kkt_residuals: np.ndarray
    iterations: int
    converged: np.ndarray

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def soft_threshold(v, t):
    """sign(v) * max(|v| - t, 0); works elementwise on arrays."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _kkt_violation(grad: np.ndarray, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    w = weights if grad.ndim == 1 else weights[:, None]
    nonzero = np.abs(grad + w * np.sign(x))
    zero = np.maximum(np.abs(grad) - w, 0.0)
    return np.where(x != 0, nonzero, zero)


def kkt_residual(p: QuadLassoProblem, x: np.ndarray) -> float:
    """Max KKT violation of x; 0 at the exact optimum."""
    if x.shape != p.g.shape:
        raise DataError(f"x has shape {x.shape}, expected {p.g.shape}")
    if x.size == 0:
        return 0.0
    grad = p.H @ x + p.g
    return float(_kkt_violation(grad, x, p.weights).max())


def _cd_sweeps(H, G, weights, tol, max_sweeps, order):
    """Cyclic CD on every column of G at once. Returns (X, kkt per column, sweeps)."""
    n, c = G.shape
    X = np.zeros((n, c))
    diag = np.diag(H)
    kkt = _kkt_violation(G, X, weights).max(axis=0) if n else np.zeros(c)
    active = np.flatnonzero(kkt > tol)
    sweeps = 0
    while sweeps < max_sweeps and active.size:
        # converged columns are frozen, so a column's iterates do not depend on its neighbours
        Xa = X[:, active]
        grad = H @ Xa + G[:, active]
        for i in order:
            old = Xa[i].copy()
            # gradient with coordinate i removed from H x
            r = grad[i] - diag[i] * old
            Xa[i] = -soft_threshold(r, weights[i]) / diag[i]
            delta = Xa[i] - old
            if np.any(delta):
                grad += np.outer(H[:, i], delta)
        sweeps += 1
        X[:, active] = Xa
        kkt[active] = _kkt_violation(H @ Xa + G[:, active], Xa, weights).max(axis=0)
        active = active[kkt[active] > tol]
    return X, kkt, sweeps


def lasso_cd(
    p: QuadLassoProblem,
    tol: float = config.LASSO_TOL,
    max_sweeps: int = config.LASSO_MAX_SWEEPS,
    order: np.ndarray | None = None,
) -> LassoSolution:
    """
    Cyclic coordinate descent. Each coordinate update is the exact minimizer
    x_i = -soft(g_i + sum_{j != i} H_ij x_j, w_i) / H_ii, so the objective never
    increases. On max_sweeps without KKT <= tol the last iterate is returned
    with converged=False.
    """
    n = p.g.shape[0]
    order = np.arange(n) if order is None else np.asarray(order)
    X, kkt, sweeps = _cd_sweeps(p.H, p.g[:, None], p.weights, tol, max_sweeps, order)
    residual = float(kkt[0]) if n else 0.0
    converged = residual <= tol
    if not converged:
        logger.warning("lasso_cd stopped after %d sweeps with KKT residual %.3e", sweeps, residual)
    return LassoSolution(x=X[:, 0], kkt_residual=residual, iterations=sweeps, converged=converged)


def lasso_cd_batch(
    H: np.ndarray,
    G: np.ndarray,
    weights: np.ndarray,
    tol: float = config.LASSO_TOL,
    max_sweeps: int = config.LASSO_MAX_SWEEPS,
    workers: int = 1,
) -> BatchLassoSolution:
    """
    Solve one problem per column of G (n x c), all sharing H and weights.
    Columns are independent; with workers > 1 they are split into disjoint
    chunks solved in a thread pool and stitched back in order.
    """
    G = np.asarray(G, dtype=np.float64)
    n, c = G.shape
    QuadLassoProblem(H=H, g=np.zeros(n), weights=weights)  # shape / PD-diagonal checks
    order = np.arange(n)

    chunks = [idx for idx in np.array_split(np.arange(c), max(1, min(workers, c))) if idx.size]
    if not chunks:
        return BatchLassoSolution(X=np.zeros((n, 0)), kkt_residuals=np.zeros(0), iterations=0,
                                  converged=np.zeros(0, dtype=bool))

    def solve(idx):
        return _cd_sweeps(H, G[:, idx], weights, tol, max_sweeps, order)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(solve, chunks))
    else:
        parts = [solve(idx) for idx in chunks]

    X = np.hstack([part[0] for part in parts])
    kkt = np.concatenate([part[1] for part in parts])
    sweeps = max(part[2] for part in parts)
    converged = kkt <= tol
    if not converged.all():
        logger.warning(
            "lasso_cd_batch: %d of %d columns hit max_sweeps=%d (worst KKT %.3e)",
            int((~converged).sum()), c, max_sweeps, float(kkt.max()),
        )
    return BatchLassoSolution(X=X, kkt_residuals=kkt, iterations=sweeps, converged=converged)
