import numpy as np
import pytest

from gbdsde.errors import ConfigurationError
from gbdsde.levy_model import LevyModel, mean_power_jump, model_preset
from gbdsde.paths import (
    IncreasingProcessSpec,
    ItoIntegrands,
    TimeGrid,
    bracket_stats,
    increment_mean_stats,
    ito_identity_residual,
    simulate,
)
from gbdsde.teugels import basis_for_model

TWO_ATOM = model_preset("two-atom")


def test_time_grid():
    g = TimeGrid.uniform(2.0, 4)
    np.testing.assert_allclose(g.times, [0, 0.5, 1, 1.5, 2])
    assert g.n_steps == 4 and g.horizon == 2.0
    for bad in ([0.0, 0.5, 0.5, 1.0], [0.1, 1.0], [0.0]):
        with pytest.raises(ConfigurationError):
            TimeGrid(np.array(bad))


def test_increasing_process_specs():
    t = np.linspace(0, 1, 5)
    np.testing.assert_allclose(IncreasingProcessSpec("linear", a=2.0).evaluate(t), 2 * t)
    np.testing.assert_allclose(IncreasingProcessSpec("power", gamma=2.0).evaluate(t), t**2)
    B = np.array([[0.0, 0.5, -1.0, 0.2, 1.5]])
    np.testing.assert_allclose(IncreasingProcessSpec("running_max").evaluate(t, B), [[0, 0.5, 1.0, 1.0, 1.5]])
    for kwargs in ({"kind": "linear", "a": -1.0}, {"kind": "power", "gamma": 0.5}, {"kind": "cubic"}):
        with pytest.raises(ConfigurationError):
            IncreasingProcessSpec(**kwargs)


def test_degenerate_model_has_no_randomness_in_L():
    b = simulate(LevyModel(), TimeGrid.uniform(1, 10), IncreasingProcessSpec(), 50, 1)
    assert b.rank == 0
    assert np.all(b.L == 0) and b.dH.shape == (50, 10, 0)


def test_linear_a_is_deterministic():
    b = simulate(TWO_ATOM, TimeGrid.uniform(1, 10), IncreasingProcessSpec("linear", a=2.0), 5, 1)
    np.testing.assert_allclose(b.A, np.broadcast_to(2 * b.grid.times, (5, 11)))


def test_running_max_a_is_nondecreasing_from_zero():
    b = simulate(TWO_ATOM, TimeGrid.uniform(1, 50), IncreasingProcessSpec("running_max"), 200, 3)
    assert np.all(b.A[:, 0] == 0)
    assert np.all(np.diff(b.A, axis=1) >= 0)


def test_simulation_is_deterministic_and_seed_dependent():
    args = (TWO_ATOM, TimeGrid.uniform(1, 20), IncreasingProcessSpec(), 300)
    a, b, c = simulate(*args, 9), simulate(*args, 9), simulate(*args, 10)
    for name in ("B", "L", "dH", "jump_time", "jump_size"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.B, c.B)


def test_dH_reconstructs_from_jump_log():
    model = LevyModel(drift=0.2, sigma=0.5, atoms=[(-1.0, 1.0), (0.5, 2.0)])
    b = simulate(model, TimeGrid.uniform(1, 25), IncreasingProcessSpec(), 200, 4, basis_for_model(model, 4))
    np.testing.assert_allclose(b.reconstruct_dH(), b.dH, atol=1e-12)
    log = b.jump_log(0)
    assert all(0 <= t <= 1 for t, _ in log)
    assert sorted(t for t, _ in log) == [t for t, _ in log]


def test_poisson_martingale_mean():
    model = LevyModel(atoms=[(1.0, 1.0)])
    b = simulate(model, TimeGrid.uniform(1, 10), IncreasingProcessSpec(), 100_000, 5)
    H = b.H[:, -1, 0]
    se = H.std(ddof=1) / np.sqrt(len(H))
    assert abs(H.mean()) < 4 * se


def test_brackets_poisson_and_two_atom():
    poisson = simulate(LevyModel(atoms=[(1.0, 1.0)]), TimeGrid.uniform(1, 10), IncreasingProcessSpec(), 50_000, 6)
    mean, se = bracket_stats(poisson, 1, 1)
    assert abs(mean - 1) < 4 * se
    two = simulate(TWO_ATOM, TimeGrid.uniform(1, 10), IncreasingProcessSpec(), 50_000, 7)
    mean, se = bracket_stats(two, 1, 2)
    assert abs(mean) < 4 * se
    with pytest.raises(IndexError):
        bracket_stats(poisson, 1, 2)


def test_increment_means_and_jump_moments():
    model = LevyModel(atoms=[(-1.0, 0.5), (0.5, 1.0), (2.0, 0.3)])
    b = simulate(model, TimeGrid.uniform(1, 5), IncreasingProcessSpec(), 100_000, 8, basis_for_model(model, 4))
    means, ses = increment_mean_stats(b)
    assert np.all(np.abs(means) < 4 * ses)
    for i in (2, 3):
        total = b.dL_power[:, :, i - 1].sum(axis=1)
        se = total.std(ddof=1) / np.sqrt(len(total))
        assert abs(total.mean() - mean_power_jump(model, i)) < 4 * se


def test_B_and_L_are_uncorrelated():
    model = LevyModel(sigma=1.0, atoms=[(1.0, 1.0)])
    b = simulate(model, TimeGrid.uniform(1, 4), IncreasingProcessSpec(), 100_000, 12)
    r = np.corrcoef(b.B[:, -1], b.L[:, -1])[0, 1]
    assert abs(r) < 4 / np.sqrt(b.n_paths)


def test_ito_identity_cases():
    b = simulate(LevyModel(atoms=[(1.0, 1.0)]), TimeGrid.uniform(1, 50), IncreasingProcessSpec(), 20_000, 13)
    assert ito_identity_residual(b, ItoIntegrands()).residual == 0.0
    for integrands in (ItoIntegrands(zeta=1.0), ItoIntegrands(gamma=1.0), ItoIntegrands(beta=1.0, start=0.5)):
        res = ito_identity_residual(b, integrands)
        assert res.residual < max(3 * res.stderr, 5 * b.grid.dt[0])


def test_simulate_rejects_zero_paths():
    with pytest.raises(ConfigurationError):
        simulate(TWO_ATOM, TimeGrid.uniform(1, 5), IncreasingProcessSpec(), 0, 1)
