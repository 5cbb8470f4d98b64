"""Ordinary and block-penalized least squares.

Both solvers answer the same kind of system: the normal equations with a
fixed 1e-10 ridge on the diagonal. The jitter makes rank-deficient designs
solvable without any data-dependent branching, and it is small enough to be
invisible on well-posed problems.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .spline_basis import PenaltyBlock

JITTER = 1e-10


def _check_system(A: np.ndarray, y: np.ndarray) -> None:
    if A.ndim != 2:
        raise ValueError(f"design matrix must be 2-D, got ndim={A.ndim}")
    if y.ndim != 1:
        raise ValueError(f"target must be 1-D, got ndim={y.ndim}")
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"design has {A.shape[0]} rows but target has {y.shape[0]}")
    if A.shape[0] == 0 or A.shape[1] == 0:
        raise ValueError("empty system")
    if not np.isfinite(A).all():
        raise ValueError("design matrix contains non-finite values")
    if not np.isfinite(y).all():
        raise ValueError("target contains non-finite values")


def least_squares(A, y) -> np.ndarray:
    """Solve (A'A + 1e-10 I) beta = A'y.

    Implemented through the equivalent augmented system [A; sqrt(jitter) I]
    so nearly collinear designs are handled by an orthogonal factorization
    rather than an explicit normal-matrix solve.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_system(A, y)
    p = A.shape[1]
    aug = np.vstack([A, np.sqrt(JITTER) * np.eye(p)])
    rhs = np.concatenate([y, np.zeros(p)])
    beta, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    return beta


def penalized_least_squares(B, y, lam: float, penalties: Sequence[PenaltyBlock]) -> np.ndarray:
    """Solve (B'B + lam * blockdiag(0, P_1..P_m) + 1e-10 I) beta = B'y.

    The penalty blocks tile the trailing columns of ``B``; at most one
    leading column (the intercept) may be left unpenalized.
    """
    B = np.asarray(B, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_system(B, y)
    if lam < 0:
        raise ValueError(f"penalty weight must be non-negative, got {lam}")
    sizes = [pb.size for pb in penalties]
    lead = B.shape[1] - sum(sizes)
    if lead not in (0, 1):
        raise ValueError(
            f"penalty blocks cover {sum(sizes)} columns but the design has "
            f"{B.shape[1]}; expected them to tile all columns or all but an intercept"
        )
    g = B.T @ B
    g[np.diag_indices_from(g)] += JITTER
    col = lead
    for pb in penalties:
        g[col : col + pb.size, col : col + pb.size] += lam * pb.matrix
        col += pb.size
    rhs = B.T @ y
    try:
        return np.linalg.solve(g, rhs)
    except np.linalg.LinAlgError:
        # Possible only when huge diagonal entries swallow the jitter.
        beta, *_ = np.linalg.lstsq(g, rhs, rcond=None)
        return beta
