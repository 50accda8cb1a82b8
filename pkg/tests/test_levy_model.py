import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdsde.errors import ConfigurationError
from gbdsde.levy_model import (
    LevyModel,
    family_atoms,
    family_moment,
    mean_power_jump,
    model_preset,
    moments_mu,
    moments_nu,
)


def test_nu_moments_direct_sum():
    assert moments_nu(LevyModel(atoms=[(1.0, 2.0)]), 3)[3] == 2.0
    assert moments_nu(LevyModel(atoms=[(-1.0, 1.0), (1.0, 1.0)]), 3)[1] == 0.0
    assert moments_nu(LevyModel(atoms=[(1.0, 1.0)]), 1)[0] == 1.0


def test_nu_moments_reject_k_max_zero():
    with pytest.raises(ValueError):
        moments_nu(LevyModel(), 0)


def test_mu_moments_shift():
    m = moments_mu(LevyModel(atoms=[(1.0, 3.0)]), 2)
    assert m.measure_tag == "mu"
    assert m[0] == 3.0 and m[1] == 3.0
    b = moments_mu(LevyModel(sigma=1.0), 3)
    assert list(b.values) == [1.0, 0.0, 0.0, 0.0]
    assert moments_mu(LevyModel(atoms=[(-1.0, 0.5), (1.0, 0.5)]), 1)[1] == 0.0


def test_moment_arrays_are_read_only():
    m = moments_mu(LevyModel(atoms=[(1.0, 3.0)]), 2)
    with pytest.raises(ValueError):
        m.values[0] = 1.0


def test_mean_power_jump_examples():
    assert mean_power_jump(LevyModel(sigma=1.0, atoms=[(1.0, 2.0)]), 2) == 2.0
    assert mean_power_jump(LevyModel(drift=0.5), 1) == 0.5
    assert mean_power_jump(LevyModel(atoms=[(-1.0, 0.5), (1.0, 0.5)]), 3) == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sigma": -1.0},
        {"atoms": [(0.0, 1.0)]},
        {"atoms": [(1.0, 0.0)]},
        {"atoms": [(1.0, -2.0)]},
        {"atoms": [(1.0,)]},
        {"horizon": 0.0},
        {"drift": math.inf},
    ],
)
def test_invalid_models_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        LevyModel(**kwargs)


def test_duplicate_atoms_merge_and_order_does_not_matter():
    a = LevyModel(atoms=[(1.0, 0.5), (-2.0, 1.0), (1.0, 0.25)])
    b = LevyModel(atoms=[(-2.0, 1.0), (1.0, 0.75)])
    assert a == b
    assert a.atoms == ((-2.0, 1.0), (1.0, 0.75))
    assert a.total_intensity == 1.75
    assert a.support_size_mu() == 2
    assert LevyModel(sigma=1.0, atoms=[(1.0, 1.0)]).support_size_mu() == 2


finite = st.floats(min_value=-3, max_value=3, allow_nan=False).filter(lambda x: abs(x) > 1e-3)
atom_lists = st.lists(st.tuples(finite, st.floats(min_value=0.01, max_value=5)), min_size=0, max_size=5)


@settings(max_examples=60, deadline=None)
@given(atom_lists, st.floats(min_value=0, max_value=2), st.integers(min_value=0, max_value=8))
def test_mu_is_shifted_nu(atoms, sigma, k_max):
    model = LevyModel(sigma=sigma, atoms=atoms)
    mu = moments_mu(model, k_max)
    nu = moments_nu(model, k_max + 2)
    expected = nu.values[2:].copy()
    expected[0] += sigma**2
    np.testing.assert_allclose(mu.values, expected, rtol=1e-13, atol=1e-13)
    assert mu[0] >= 0
    assert np.all(mu.values[::2] >= -1e-12)


def test_family_atoms_reproduce_closed_form_moments():
    for family, params in (("normal", {"mean": 0.3, "std": 0.7}), ("uniform", {"low": 0.2, "high": 1.5})):
        model = LevyModel(atoms=family_atoms(family, 2.0, params, n_nodes=10))
        nu = moments_nu(model, 12)
        for k in range(13):
            assert nu[k] == pytest.approx(family_moment(family, 2.0, params, k), rel=1e-11, abs=1e-12)


def test_family_errors():
    with pytest.raises(ConfigurationError):
        family_atoms("gamma", 1.0, {})
    with pytest.raises(ConfigurationError):
        family_atoms("normal", 1.0, {"mean": 0.0, "std": 1.0}, n_nodes=3)  # a node sits at 0
    with pytest.raises(ConfigurationError):
        LevyModel.from_family("uniform", 1.0, {"low": 1.0, "high": 0.5})


def test_from_family_builds_model():
    model = LevyModel.from_family("normal", 1.5, {"mean": 0.0, "std": 0.5}, sigma=0.2, n_nodes=6)
    assert len(model.atoms) == 6
    assert model.total_intensity == pytest.approx(1.5)


def test_model_presets():
    assert model_preset("poisson", intensity=3.0).atoms == ((1.0, 3.0),)
    assert model_preset("jump-diffusion").sigma == 1.0
    with pytest.raises(ConfigurationError):
        model_preset("nope")
    with pytest.raises(ConfigurationError):
        model_preset("poisson", rate=2.0)
