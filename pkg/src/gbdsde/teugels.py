"""Orthonormal polynomials against ``mu`` and the Teugels martingale coefficients.

``q_i(x) = c_{i,i} x^{i-1} + ... + c_{i,1}`` is obtained from a pivoted
Cholesky factorization ``G = L L^T`` of the Hankel matrix ``G[a, b] = m_{a+b}``
of ``mu``-moments; the coefficient matrix is ``L^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import solve_triangular

from .levy_model import LevyModel, MomentSequence, mean_power_jump, moments_mu

DEFAULT_PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class TeugelsBasis:
    """Lower-triangular ``coeffs[i-1, k-1] = c_{i,k}`` for ``1 <= k <= i <= rank``."""

    rank: int
    coeffs: np.ndarray
    mu_moments: MomentSequence

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).reshape(self.rank, self.rank)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def q(self, i: int, x):
        return eval_q(self, i, x)


def orthonormalize(
    mu_moments: MomentSequence, max_order: int, pivot_tol: float = DEFAULT_PIVOT_TOL
) -> TeugelsBasis:
    """Orthonormalize ``1, x, ..., x^{max_order-1}`` in ``L^2(mu)``.

    Stops at the first monomial whose squared residual norm, after removing its
    projection on the previous ones, is below ``pivot_tol`` times its own squared
    norm. The rank returned is the number of polynomials accepted before that.
    A total mass below ``pivot_tol`` gives a rank-0 basis.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    if pivot_tol <= 0:
        raise ValueError("pivot_tol must be > 0")
    m = np.asarray(mu_moments.values, dtype=float)
    if len(m) < 2 * max_order - 1:
        raise ValueError(
            f"need mu-moments up to index {2 * max_order - 2}, got {len(m) - 1}"
        )
    gram = hankel_matrix(m, max_order)
    if gram[0, 0] <= pivot_tol:
        return TeugelsBasis(0, np.zeros((0, 0)), mu_moments)

    chol = np.zeros_like(gram)
    rank = 0
    for i in range(max_order):
        row = gram[i, :i].copy()
        for k in range(i):
            row[k] = (row[k] - row[:k] @ chol[k, :k]) / chol[k, k]
        residual = gram[i, i] - row @ row
        if residual <= pivot_tol * gram[i, i]:
            break
        chol[i, :i] = row
        chol[i, i] = np.sqrt(residual)
        rank = i + 1

    lower = chol[:rank, :rank]
    coeffs = solve_triangular(lower, np.eye(rank), lower=True)
    return TeugelsBasis(rank, coeffs, mu_moments)


def basis_for_model(model: LevyModel, max_order: int, pivot_tol: float = DEFAULT_PIVOT_TOL) -> TeugelsBasis:
    return orthonormalize(moments_mu(model, 2 * max_order - 2), max_order, pivot_tol)


def hankel_matrix(moments, order: int) -> np.ndarray:
    idx = np.arange(order)
    return np.asarray(moments, dtype=float)[idx[:, None] + idx[None, :]]


def eval_q(basis: TeugelsBasis, i: int, x):
    """Horner evaluation of ``q_i`` at ``x`` (scalar or array)."""
    if not 1 <= i <= basis.rank:
        raise IndexError(f"polynomial index {i} outside 1..{basis.rank}")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k in range(i - 1, -1, -1):
        out = out * x + basis.coeffs[i - 1, k]
    return out if out.ndim else float(out)


def gram_check(basis: TeugelsBasis) -> np.ndarray:
    """Residuals ``int q_i q_j dmu - delta_ij``.

    The float coefficients and moments are converted to exact rationals, so the
    residuals measure the basis itself rather than rounding in the check.
    """
    r = basis.rank
    if r == 0:
        return np.zeros((0, 0))
    m = [Fraction(float(v)) for v in basis.mu_moments.values[: 2 * r - 1]]
    c = [[Fraction(float(v)) for v in row] for row in basis.coeffs]
    out = np.empty((r, r))
    for i in range(r):
        for j in range(i, r):
            acc = sum(
                (c[i][a] * c[j][b] * m[a + b] for a in range(i + 1) for b in range(j + 1)),
                Fraction(0),
            )
            out[i, j] = out[j, i] = float(acc - (1 if i == j else 0))
    return out


def power_jump_means(model: LevyModel, rank: int) -> np.ndarray:
    """``E[L_1^{(j)}]`` for ``j = 1..rank``."""
    return np.array([mean_power_jump(model, j) for j in range(1, rank + 1)])


def teugels_increments(basis: TeugelsBasis, power_increments: np.ndarray, dt, power_means: np.ndarray) -> np.ndarray:
    """Map power-jump increments ``dL^{(j)}`` (last axis, ``j = 1..rank``) to ``dH^{(i)}``.

    ``dH^{(i)} = sum_{j<=i} c_{i,j} (dL^{(j)} - dt E[L_1^{(j)}])``.
    """
    dt = np.asarray(dt, dtype=float)
    compensated = power_increments - dt[..., None] * power_means
    return compensated @ basis.coeffs.T
