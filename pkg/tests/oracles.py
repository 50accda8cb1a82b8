"""Independent reference computations used by the tests.

These share no code with the package: exact rational Gram-Schmidt, mpmath
evaluation of the certificate constants and closed-form solutions.
"""

from __future__ import annotations

import math
from fractions import Fraction

import mpmath as mp

mp.mp.dps = 50


def mu_moments_exact(atoms, sigma2=Fraction(0), k_max=8):
    """``m_k = sum lambda x^(k+2) + sigma^2 [k = 0]`` with rational atoms."""
    out = []
    for k in range(k_max + 1):
        m = sum((Fraction(lam) * Fraction(x) ** (k + 2) for x, lam in atoms), Fraction(0))
        out.append(m + (Fraction(sigma2) if k == 0 else 0))
    return out


def _inner(p, q, moments):
    return sum((a * b * moments[i + j] for i, a in enumerate(p) for j, b in enumerate(q)), Fraction(0))


def gram_schmidt_exact(moments, order):
    """Orthonormal polynomial coefficients (lowest degree first) as mpmath numbers.

    Monic orthogonal polynomials are built in exact rational arithmetic; the
    final normalization takes a 50-digit square root. Stops at the first
    polynomial with zero norm.
    """
    monic = []
    norms = []
    for i in range(order):
        p = [Fraction(0)] * i + [Fraction(1)]
        for q, nq in zip(monic, norms):
            proj = _inner(p, q, moments) / nq
            p = [a - proj * (q[j] if j < len(q) else 0) for j, a in enumerate(p)]
        n = _inner(p, p, moments)
        if n == 0:
            break
        monic.append(p)
        norms.append(n)
    return [[mp.mpf(a.numerator) / a.denominator / mp.sqrt(mp.mpf(n.numerator) / n.denominator) for a in p]
            for p, n in zip(monic, norms)]


def constant_M_mp(C, alpha, T):
    C, alpha, T = mp.mpf(C), mp.mpf(alpha), mp.mpf(T)
    first = (3 * (1 - alpha) / (2 * C + alpha) + 1) * mp.e ** ((2 * C + alpha) * T / (1 - alpha))
    second = ((1 - alpha) / C + 1) * mp.e ** (C * T / (1 - alpha))
    return max(first, second)


def phi_linear(M, M1, K, T, t, n):
    """``phi_n(t) = M_1 (M K)^(n+1) (T - t)^(n+1) / (n+1)!`` for ``rho = K u``."""
    return M1 * (M * K * (T - t)) ** (n + 1) / math.factorial(n + 1)
