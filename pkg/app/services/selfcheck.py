"""
Seeded invariant suite run by `cli selfcheck`: spectral identities, lasso
optimality, Sylvester residuals, BPL stationarity, descent of the training
objective and the norm bounds on W.
"""
import logging
from typing import Callable, List, Sequence

import numpy as np
from pydantic import ValidationError

from app.services.dataio import make_synthetic
from app.services.l1solve import QuadLassoProblem, kkt_residual, lasso_cd
from app.services.matcore import solve_sylvester, sylvester_residual, w_norm_bound, w_sensitivity_bound
from app.services.solver import DESCENT_SLACK, bpl, sap_i, train
from app.services.spectral import build_knn_affinity, normalized_laplacian, spectral_basis
from app.utils.errors import SapError
from app.utils.models import CheckResult, GraphConfig, SelfCheckReport, SolverParams, SyntheticSpec

logger = logging.getLogger(__name__)

PERTURBATION_SCALES = (1e-2, 1e-3, 1e-4)


def is_non_increasing(values: Sequence[float], slack: float = DESCENT_SLACK) -> bool:
    return all(b <= a + slack * max(1.0, abs(a)) for a, b in zip(values, values[1:]))


def bpl_gradient(W: np.ndarray, Y: np.ndarray, X: np.ndarray, lambda4: float) -> np.ndarray:
    """Gradient of ||WX - Y||^2 + ||X - W^T Y||^2 + lambda4 ||W||^2 with respect to W."""
    return 2.0 * (W @ X - Y) @ X.T - 2.0 * Y @ (X - W.T @ Y).T + 2.0 * lambda4 * W


def bpl_loss(W: np.ndarray, Y: np.ndarray, X: np.ndarray, lambda4: float) -> float:
    return float(np.sum((W @ X - Y) ** 2) + np.sum((X - W.T @ Y) ** 2) + lambda4 * np.sum(W**2))


def _random_points(rng, n: int, d: int = 4) -> np.ndarray:
    X = rng.standard_normal((d, n))
    return X / np.linalg.norm(X, axis=0)


# ---------- checks ----------

def check_spectral(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    X = _random_points(rng, 30)
    L = normalized_laplacian(build_knn_affinity(X, GraphConfig(k_g=5, m=30)))
    full = spectral_basis(L, 30, method="dense")
    B = full.b_matrix()
    recon = float(np.linalg.norm(B.T @ B - L.toarray()))

    m = 5
    alpha = rng.standard_normal((m, 3))
    lhs = np.abs(B @ full.eigvecs[:, :m] @ alpha).sum(axis=0)
    rhs = (full.penalty_weights[:m, None] * np.abs(alpha)).sum(axis=0)
    identity = float(np.abs(lhs - rhs).max())
    in_range = bool(full.eigvals.min() >= 0 and full.eigvals.max() <= 2 + 1e-9)

    ok = recon <= 1e-8 and identity <= 1e-8 and in_range
    return CheckResult(
        name="spectral identities",
        passed=ok,
        detail=f"||B^T B - L||={recon:.2e}, L1 identity gap={identity:.2e}, eigvals in [0,2]: {in_range}",
    )


def check_lasso(seed: int, n_problems: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_problems):
        n = int(rng.integers(2, 4))
        A = rng.standard_normal((n, n))
        p = QuadLassoProblem(H=A @ A.T + 0.5 * np.eye(n), g=rng.standard_normal(n), weights=rng.uniform(0, 1, n))
        worst = max(worst, kkt_residual(p, lasso_cd(p).x))

    # closed-form SAP-I against coordinate descent on the same problem
    X = _random_points(rng, 20)
    basis = spectral_basis(normalized_laplacian(build_knn_affinity(X, GraphConfig(k_g=4))), 3)
    Y = rng.standard_normal((2, 20))
    alpha = sap_i(Y, basis, lambda1=0.3)
    gap = 0.0
    sap_kkt = 0.0
    for j in range(Y.shape[0]):
        c = basis.eigvecs.T @ Y[j]
        p = QuadLassoProblem(H=2.0 * np.eye(3), g=-2.0 * c, weights=0.3 * basis.penalty_weights)
        gap = max(gap, float(np.abs(lasso_cd(p).x - alpha[:, j]).max()))
        sap_kkt = max(sap_kkt, kkt_residual(p, alpha[:, j]))

    ok = worst <= 1e-8 and gap <= 1e-8 and sap_kkt <= 1e-10
    return CheckResult(
        name="lasso KKT / SAP-I closed form",
        passed=ok,
        detail=f"max KKT={worst:.2e}, SAP-I vs CD={gap:.2e}, SAP-I KKT={sap_kkt:.2e}",
    )


def check_sylvester(seed: int, lambda4: float, n_instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        k, d, n = (int(v) for v in rng.integers(2, 8, size=3))
        Y, X = rng.standard_normal((k, n)), rng.standard_normal((d, n))
        W = bpl(Y, X, lambda4)
        M1, M2, R = Y @ Y.T + lambda4 * np.eye(k), X @ X.T, 2.0 * Y @ X.T
        worst = max(worst, sylvester_residual(M1, M2, R, W) / (1.0 + np.linalg.norm(R)))
    return CheckResult(name="Sylvester residual", passed=worst <= 1e-8, detail=f"max relative residual={worst:.2e}")


def check_stationarity(seed: int, lambda4: float) -> CheckResult:
    rng = np.random.default_rng(seed)
    Y, X = rng.standard_normal((4, 12)), rng.standard_normal((6, 12))
    W = bpl(Y, X, lambda4)
    h = 1e-6
    worst = 0.0
    for _ in range(5):
        i, j = int(rng.integers(0, 4)), int(rng.integers(0, 6))
        E = np.zeros_like(W)
        E[i, j] = h
        fd = (bpl_loss(W + E, Y, X, lambda4) - bpl_loss(W - E, Y, X, lambda4)) / (2 * h)
        worst = max(worst, abs(fd))
    analytic = float(np.abs(bpl_gradient(W, Y, X, lambda4)).max())
    ok = worst <= 1e-5 and analytic <= 1e-6
    return CheckResult(name="BPL stationarity", passed=ok, detail=f"finite-difference={worst:.2e}, analytic={analytic:.2e}")


def check_training(seed: int, lambda4: float, inject_nonmonotone: bool = False) -> List[CheckResult]:
    spec = SyntheticSpec(d=16, k=10, p=8, q=4, images_per_class=30, K_annotated=5, noise_std=0.05, seed=seed)
    data, _, _ = make_synthetic(spec)
    params = SolverParams(lambda4=lambda4)
    W, state = train(data, params)

    values = [v for _, _, v in state.step_trace]
    if inject_nonmonotone:
        values = values + [values[-1] + 1.0 + abs(values[-1]) * 1e-3]
    results = [
        CheckResult(
            name="objective descent",
            passed=is_non_increasing(values) and len(state.objective_trace) <= params.max_iters + 1,
            detail=f"{len(values)} steps, {state.iterations} iterations, final={values[-1]:.6g}",
        )
    ]

    bound = w_norm_bound(state.Y, data.X, lambda4)
    w_norm = float(np.linalg.norm(W))
    results.append(CheckResult(name="W norm bound", passed=w_norm <= bound, detail=f"||W||={w_norm:.4g} <= {bound:.4g}"))

    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(state.Y.shape)
    direction /= np.linalg.norm(direction)
    y_norm = float(np.linalg.norm(state.Y))
    deltas, ok = [], True
    for scale in PERTURBATION_SCALES:
        dY = scale * y_norm * direction
        dW = float(np.linalg.norm(bpl(state.Y + dY, data.X, lambda4) - W))
        ok = ok and dW <= w_sensitivity_bound(state.Y, dY, data.n_samples, lambda4)
        deltas.append(dW)
    ok = ok and all(b < a for a, b in zip(deltas, deltas[1:]))
    results.append(
        CheckResult(
            name="W perturbation bound",
            passed=ok,
            detail="||dW|| = " + ", ".join(f"{v:.2e}" for v in deltas),
        )
    )
    return results


# ---------- runner ----------

def _guarded(name: str, fn: Callable[[], CheckResult | List[CheckResult]]) -> List[CheckResult]:
    try:
        out = fn()
        return out if isinstance(out, list) else [out]
    except (SapError, ValidationError) as e:
        logger.error("check %s failed to run: %s", name, e)
        return [CheckResult(name=name, passed=False, detail=f"precondition failure: {e}")]


def run_selfcheck(seed: int = 0, lambda4: float = 0.01, inject_nonmonotone: bool = False) -> SelfCheckReport:
    checks: List[CheckResult] = []
    checks += _guarded("spectral identities", lambda: check_spectral(seed))
    checks += _guarded("lasso KKT / SAP-I closed form", lambda: check_lasso(seed))
    checks += _guarded("Sylvester residual", lambda: check_sylvester(seed, lambda4))
    checks += _guarded("BPL stationarity", lambda: check_stationarity(seed, lambda4))
    checks += _guarded("training invariants", lambda: check_training(seed, lambda4, inject_nonmonotone))
    for c in checks:
        logger.info("%s: %s (%s)", "PASS" if c.passed else "FAIL", c.name, c.detail)
    return SelfCheckReport(checks=checks)
