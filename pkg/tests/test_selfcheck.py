import numpy as np

from app.services.selfcheck import (
    bpl_gradient,
    bpl_loss,
    check_lasso,
    check_spectral,
    check_stationarity,
    check_sylvester,
    is_non_increasing,
    run_selfcheck,
)
from app.services.solver import bpl


def test_is_non_increasing_allows_slack():
    assert is_non_increasing([10.0, 10.0 + 1e-9, 5.0])
    assert not is_non_increasing([10.0, 10.1])


def test_gradient_matches_finite_differences(rng):
    W, Y, X = rng.standard_normal((2, 3)), rng.standard_normal((2, 6)), rng.standard_normal((3, 6))
    h = 1e-6
    E = np.zeros_like(W)
    E[1, 2] = h
    fd = (bpl_loss(W + E, Y, X, 0.1) - bpl_loss(W - E, Y, X, 0.1)) / (2 * h)
    np.testing.assert_allclose(bpl_gradient(W, Y, X, 0.1)[1, 2], fd, rtol=1e-6, atol=1e-6)


def test_gradient_vanishes_at_bpl_solution(rng):
    Y, X = rng.standard_normal((3, 9)), rng.standard_normal((4, 9))
    np.testing.assert_allclose(bpl_gradient(bpl(Y, X, 0.05), Y, X, 0.05), 0.0, atol=1e-9)


class TestChecks:
    def test_individual_checks_pass(self):
        for result in (check_spectral(0), check_lasso(0), check_sylvester(0, 0.01), check_stationarity(0, 0.01)):
            assert result.passed, result.detail

    def test_default_run_passes(self):
        report = run_selfcheck(seed=0)
        assert report.passed, [c for c in report.checks if not c.passed]
        names = {c.name for c in report.checks}
        assert {"objective descent", "W norm bound", "W perturbation bound"} <= names

    def test_zero_lambda4_is_a_precondition_failure(self):
        report = run_selfcheck(seed=0, lambda4=0.0)
        assert not report.passed
        failed = [c for c in report.checks if not c.passed]
        assert any("precondition failure" in c.detail for c in failed)
        assert any(c.name == "Sylvester residual" for c in failed)

    def test_injected_rise_is_reported(self):
        report = run_selfcheck(seed=0, inject_nonmonotone=True)
        descent = next(c for c in report.checks if c.name == "objective descent")
        assert not descent.passed
