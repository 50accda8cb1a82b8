from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdsde.levy_model import LevyModel, moments_mu
from gbdsde.teugels import (
    basis_for_model,
    eval_q,
    gram_check,
    hankel_matrix,
    orthonormalize,
    power_jump_means,
    teugels_increments,
)

from .oracles import gram_schmidt_exact, mu_moments_exact


def _coeffs_match_oracle(basis, oracle, tol):
    assert basis.rank == len(oracle)
    for i, row in enumerate(oracle):
        for k, value in enumerate(row):
            assert abs(basis.coeffs[i, k] - float(value)) <= tol * max(1.0, abs(float(value)))


def test_poisson_rank_one_matches_exact_oracle():
    basis = basis_for_model(LevyModel(atoms=[(1.0, 4.0)]), 4)
    assert basis.rank == 1
    assert basis.coeffs[0, 0] == 0.5
    oracle = gram_schmidt_exact(mu_moments_exact([(1, 3)]), 4)
    _coeffs_match_oracle(basis_for_model(LevyModel(atoms=[(1.0, 3.0)]), 4), oracle, 1e-12)
    assert float(oracle[0][0]) == pytest.approx(1 / np.sqrt(3), rel=1e-15)


def test_pure_brownian_basis():
    basis = basis_for_model(LevyModel(sigma=2.0), 3)
    assert basis.rank == 1
    assert basis.coeffs[0, 0] == pytest.approx(0.5)


def test_symmetric_two_atom_is_identity():
    basis = basis_for_model(LevyModel(atoms=[(-1.0, 0.5), (1.0, 0.5)]), 4)
    assert basis.rank == 2
    np.testing.assert_allclose(basis.coeffs, np.eye(2), atol=1e-15)
    np.testing.assert_array_equal(gram_check(basis), np.zeros((2, 2)))


def test_zero_measure_gives_rank_zero():
    basis = basis_for_model(LevyModel(), 3)
    assert basis.rank == 0
    assert gram_check(basis).shape == (0, 0)


def test_eval_q_examples():
    poisson = basis_for_model(LevyModel(atoms=[(1.0, 4.0)]), 2)
    assert eval_q(poisson, 1, 7.0) == 0.5
    sym = basis_for_model(LevyModel(atoms=[(-1.0, 0.5), (1.0, 0.5)]), 3)
    assert eval_q(sym, 2, -1.0) == pytest.approx(-1.0)
    assert sym.q(1, 3.0) == sym.q(1, -8.0)
    with pytest.raises(IndexError):
        eval_q(poisson, 2, 0.0)
    np.testing.assert_allclose(eval_q(sym, 2, np.array([0.5, 2.0])), [0.5, 2.0])


def test_orthonormalize_argument_checks():
    m = moments_mu(LevyModel(atoms=[(1.0, 1.0)]), 2)
    with pytest.raises(ValueError):
        orthonormalize(m, 3)
    with pytest.raises(ValueError):
        orthonormalize(m, 0)
    with pytest.raises(ValueError):
        orthonormalize(m, 2, pivot_tol=0.0)


def test_hankel_matrix():
    np.testing.assert_array_equal(hankel_matrix([1, 2, 3, 4, 5], 3), [[1, 2, 3], [2, 3, 4], [3, 4, 5]])


# Rational atoms on a coarse lattice. Clustered atoms far from 0 still give an
# ill-conditioned Hankel matrix, so the Gram tolerance scales with the cancelling terms.
lattice = st.sampled_from([Fraction(k, 4) for k in range(-8, 9) if k])
rational_atoms = st.lists(
    st.tuples(lattice, st.sampled_from([Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2)])),
    min_size=1, max_size=4, unique_by=lambda a: a[0],
)


@settings(max_examples=40, deadline=None)
@given(rational_atoms, st.sampled_from([Fraction(0), Fraction(1, 4), Fraction(1)]))
def test_basis_matches_exact_gram_schmidt(atoms, sigma2):
    model = LevyModel(sigma=float(mp.sqrt(sigma2)), atoms=[(float(x), float(l)) for x, l in atoms])
    order = len(atoms) + 2
    basis = basis_for_model(model, order)
    oracle = gram_schmidt_exact(mu_moments_exact(atoms, sigma2, 2 * order), order)
    _coeffs_match_oracle(basis, oracle, 1e-7)
    assert basis.rank == model.support_size_mu()
    assert np.all(np.diag(basis.coeffs) > 0)
    assert np.all(np.abs(gram_check(basis)) <= np.maximum(1e-10, 100 * np.finfo(float).eps * gram_scale(basis)))


def gram_scale(basis):
    """``sum_ab |c_ia| |c_jb| |m_{a+b}|``: the size of the terms cancelling in each Gram entry."""
    r = basis.rank
    c = np.abs(basis.coeffs)
    m = np.abs(np.asarray(basis.mu_moments.values[: 2 * r - 1]))
    hankel = m[np.add.outer(np.arange(r), np.arange(r))]
    return c @ hankel @ c.T


@settings(max_examples=30, deadline=None)
@given(rational_atoms, st.sampled_from([0.5, 2.0, 9.0]))
def test_intensity_scaling_and_permutation(atoms, c):
    pairs = [(float(x), float(l)) for x, l in atoms]
    order = len(pairs) + 1
    base = basis_for_model(LevyModel(atoms=pairs), order)
    scaled = basis_for_model(LevyModel(atoms=[(x, c * l) for x, l in pairs]), order)
    permuted = basis_for_model(LevyModel(atoms=pairs[::-1]), order)
    assert scaled.rank == base.rank == len(pairs)
    np.testing.assert_allclose(scaled.coeffs, base.coeffs / np.sqrt(c), rtol=1e-8, atol=1e-12)
    np.testing.assert_array_equal(permuted.coeffs, base.coeffs)


def test_increments_are_compensated_power_sums():
    model = LevyModel(drift=0.1, atoms=[(-1.0, 0.5), (2.0, 0.25)])
    basis = basis_for_model(model, 3)
    means = power_jump_means(model, basis.rank)
    np.testing.assert_allclose(means, [0.1 - 0.5 + 0.5, 0.5 + 1.0])
    dL = np.array([[[2.0, 4.0], [0.0, 0.0]]])
    dt = np.array([0.5, 0.5])
    dH = teugels_increments(basis, dL, dt, means)
    expected = (dL - dt[:, None] * means) @ basis.coeffs.T
    np.testing.assert_allclose(dH, expected)
