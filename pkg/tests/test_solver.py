"""Solvers against hand values and an explicit normal-equation oracle."""

import numpy as np
import numpy.testing as npt
import pytest

from splinecfr.solver import JITTER, least_squares, penalized_least_squares
from splinecfr.spline_basis import PenaltyBlock, penalty_block


def oracle_solution(A, y, lam=0.0, penalties=(), lead=None):
    """Direct inversion of the jittered normal equations (small systems)."""
    A = np.asarray(A, float)
    y = np.asarray(y, float)
    p = A.shape[1]
    m = A.T @ A + JITTER * np.eye(p)
    if lead is None:
        lead = p - sum(pb.matrix.shape[0] for pb in penalties)
    col = lead
    for pb in penalties:
        k = pb.matrix.shape[0]
        m[col : col + k, col : col + k] += lam * pb.matrix
        col += k
    return np.linalg.inv(m) @ (A.T @ y)


class TestLeastSquares:
    def test_mean(self):
        npt.assert_allclose(least_squares([[1.0], [1.0]], [2.0, 4.0]), [3.0], atol=1e-8)

    def test_identity(self):
        npt.assert_allclose(
            least_squares(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0], atol=1e-8
        )

    def test_collinear_columns_still_fit(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0]])
        beta = least_squares(A, [1.0, 1.0])
        assert np.isfinite(beta).all()
        npt.assert_allclose(A @ beta, [1.0, 1.0], atol=1e-6)

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            n, p = rng.integers(6, 30), rng.integers(1, 7)
            A = rng.normal(size=(n, p))
            y = rng.normal(size=n)
            npt.assert_allclose(least_squares(A, y), oracle_solution(A, y), atol=1e-8)

    def test_shape_errors(self):
        with pytest.raises(ValueError, match="rows"):
            least_squares(np.eye(3), [1.0, 2.0])
        with pytest.raises(ValueError, match="non-finite"):
            least_squares([[np.nan], [1.0]], [1.0, 2.0])


class TestPenalizedLeastSquares:
    def test_zero_lambda_equals_ols(self):
        rng = np.random.default_rng(5)
        B = np.hstack([np.ones((20, 1)), rng.normal(size=(20, 4))])
        y = rng.normal(size=20)
        pens = [penalty_block(4)]
        npt.assert_allclose(
            penalized_least_squares(B, y, 0.0, pens), least_squares(B, y), atol=1e-8
        )

    def test_huge_lambda_flattens_coefficients(self):
        # Identity design, no intercept column: the penalty null space is
        # the equal-coefficient direction, and y = (0, 2) projects onto it
        # as (1, 1).
        pens = [PenaltyBlock(np.array([[1.0, -1.0], [-1.0, 1.0]]))]
        beta = penalized_least_squares(np.eye(2), [0.0, 2.0], 1e9, pens)
        npt.assert_allclose(beta, [1.0, 1.0], atol=1e-6)

    def test_unit_ridge(self):
        pens = [PenaltyBlock(np.eye(2))]
        beta = penalized_least_squares(np.eye(2), [1.0, 1.0], 1.0, pens)
        npt.assert_allclose(beta, [0.5, 0.5], atol=1e-8)

    def test_matches_oracle_with_intercept(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            n = rng.integers(10, 40)
            k = rng.integers(3, 6)
            B = np.hstack([np.ones((n, 1)), rng.normal(size=(n, k))])
            y = rng.normal(size=n)
            lam = rng.uniform(0, 5)
            pens = [penalty_block(k)]
            npt.assert_allclose(
                penalized_least_squares(B, y, lam, pens),
                oracle_solution(B, y, lam, pens, lead=1),
                atol=1e-8,
            )

    def test_penalty_monotone_in_lambda(self):
        rng = np.random.default_rng(23)
        B = np.hstack([np.ones((30, 1)), rng.normal(size=(30, 5))])
        y = rng.normal(size=30)
        pens = [penalty_block(5)]
        previous = None
        for lam in (0.0, 0.1, 1.0, 10.0):
            beta = penalized_least_squares(B, y, lam, pens)
            block = beta[1:]
            amount = block @ pens[0].matrix @ block
            if previous is not None:
                assert amount <= previous + 1e-10
            previous = amount

    def test_residual_orthogonality_at_zero_lambda(self):
        rng = np.random.default_rng(31)
        B = np.hstack([np.ones((40, 1)), rng.normal(size=(40, 4))])
        y = rng.normal(size=40)
        beta = penalized_least_squares(B, y, 0.0, [penalty_block(4)])
        assert np.abs(B.T @ (y - B @ beta)).max() < 1e-6

    def test_block_layout_mismatch(self):
        B = np.ones((5, 4))
        with pytest.raises(ValueError, match="tile"):
            penalized_least_squares(B, np.ones(5), 1.0, [penalty_block(6)])
        with pytest.raises(ValueError, match="tile"):
            # two leading unpenalized columns is not a supported layout
            penalized_least_squares(
                np.ones((5, 5)), np.ones(5), 1.0, [penalty_block(3)]
            )

    def test_negative_lambda(self):
        with pytest.raises(ValueError, match="non-negative"):
            penalized_least_squares(np.eye(2), [1.0, 1.0], -0.5, [])
