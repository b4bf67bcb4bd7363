import numpy as np
import pytest

from app.services.l1solve import (
    QuadLassoProblem,
    kkt_residual,
    lasso_cd,
    lasso_cd_batch,
    soft_threshold,
)
from app.utils.errors import DataError
from tests.oracles import grid_search_lasso, random_well_conditioned


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([3.0, -3.0, 0.5, -0.5]), 1.0), [2.0, -2.0, 0.0, 0.0])


class TestLassoCD:
    def test_agrees_with_grid_search(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 4))
            H = random_well_conditioned(rng, n)
            g = rng.uniform(-0.5, 0.5, n)
            w = rng.uniform(0.0, 0.5, n)
            sol = lasso_cd(QuadLassoProblem(H=H, g=g, weights=w))
            assert sol.converged
            oracle = grid_search_lasso(H, g, w, radius=1.8)
            np.testing.assert_allclose(sol.x, oracle, atol=2e-3)

    def test_kkt_at_solution(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 6))
            A = rng.standard_normal((n, n))
            p = QuadLassoProblem(H=A @ A.T + 0.5 * np.eye(n), g=rng.standard_normal(n), weights=rng.uniform(0, 1, n))
            sol = lasso_cd(p)
            assert sol.kkt_residual <= 1e-8
            assert kkt_residual(p, sol.x) <= 1e-8

    def test_zero_solution_when_weights_dominate(self):
        p = QuadLassoProblem(H=np.eye(2), g=np.array([0.1, -0.1]), weights=np.ones(2))
        sol = lasso_cd(p)
        np.testing.assert_array_equal(sol.x, 0.0)
        assert sol.iterations == 0

    def test_unweighted_is_linear_solve(self, rng):
        H = random_well_conditioned(rng, 3)
        g = rng.standard_normal(3)
        sol = lasso_cd(QuadLassoProblem(H=H, g=g, weights=np.zeros(3)))
        np.testing.assert_allclose(sol.x, np.linalg.solve(H, -g), atol=1e-8)

    def test_objective_does_not_increase_per_sweep(self, rng):
        H = random_well_conditioned(rng, 3)
        p = QuadLassoProblem(H=H, g=rng.standard_normal(3), weights=np.full(3, 0.2))
        values = [p.objective(lasso_cd(p, max_sweeps=s).x) for s in range(1, 8)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_sweep_cap_reports_nonconvergence(self):
        H = np.array([[1.0, 0.99], [0.99, 1.0]])
        p = QuadLassoProblem(H=H, g=np.array([-1.0, -1.0]), weights=np.zeros(2))
        sol = lasso_cd(p, max_sweeps=1)
        assert not sol.converged
        assert sol.iterations == 1
        assert sol.kkt_residual > 1e-8

    def test_rejects_negative_weights(self):
        with pytest.raises(DataError, match="nonnegative"):
            QuadLassoProblem(H=np.eye(2), g=np.zeros(2), weights=np.array([1.0, -1.0]))


    def test_rejects_indefinite_h(self):
        # positive diagonal, eigenvalues 3 and -1
        H = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(DataError, match="positive definite"):
            QuadLassoProblem(H=H, g=np.array([-1.0, 0.0]), weights=np.zeros(2))

    def test_rejects_asymmetric_h(self):
        H = np.array([[2.0, 0.5], [0.0, 2.0]])
        with pytest.raises(DataError, match="not symmetric"):
            QuadLassoProblem(H=H, g=np.zeros(2), weights=np.zeros(2))

    def test_batch_checks_h(self):
        with pytest.raises(DataError, match="positive definite"):
            lasso_cd_batch(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones((2, 3)), np.zeros(2))

    def test_diagonal_h_takes_one_sweep(self, rng):
        h = rng.uniform(0.5, 3.0, 5)
        g = rng.standard_normal(5)
        g[0] = 2.0  # at least one active coordinate
        w = rng.uniform(0.0, 1.0, 5)
        sol = lasso_cd(QuadLassoProblem(H=np.diag(h), g=g, weights=w))
        assert sol.iterations == 1
        assert sol.converged
        np.testing.assert_allclose(sol.x, -soft_threshold(g, w) / h, rtol=0, atol=1e-15)

    def test_visiting_order_does_not_matter(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 7))
            p = QuadLassoProblem(H=random_well_conditioned(rng, n), g=rng.standard_normal(n), weights=rng.uniform(0, 0.5, n))
            forward = lasso_cd(p)
            for order in (np.arange(n)[::-1], rng.permutation(n)):
                other = lasso_cd(p, order=order)
                assert other.converged
                np.testing.assert_allclose(other.x, forward.x, atol=1e-7)


class TestBatch:
    def test_matches_single_problems(self, rng):
        H = random_well_conditioned(rng, 4)
        G = rng.standard_normal((4, 9))
        w = np.full(4, 0.3)
        batch = lasso_cd_batch(H, G, w)
        for j in range(9):
            single = lasso_cd(QuadLassoProblem(H=H, g=G[:, j], weights=w))
            np.testing.assert_allclose(batch.X[:, j], single.x, atol=1e-10)
        assert batch.all_converged

    def test_worker_count_is_deterministic(self, rng):
        H = random_well_conditioned(rng, 5)
        G = rng.standard_normal((5, 23))
        w = np.full(5, 0.1)
        one = lasso_cd_batch(H, G, w, workers=1)
        again = lasso_cd_batch(H, G, w, workers=1)
        many = lasso_cd_batch(H, G, w, workers=4)
        np.testing.assert_array_equal(one.X, again.X)
        np.testing.assert_allclose(one.X, many.X, atol=1e-12)

    def test_empty_batch(self):
        sol = lasso_cd_batch(np.eye(2), np.zeros((2, 0)), np.zeros(2))
        assert sol.X.shape == (2, 0)
        assert sol.all_converged
