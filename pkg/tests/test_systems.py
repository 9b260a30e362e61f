import numpy as np
import pytest
from numpy.testing import assert_allclose

from odediscover.basis import enumerate_basis, evaluate_library
from odediscover.errors import DivergenceError, InvalidDimensionError, UnknownSystemError
from odediscover.systems import (
    SYSTEMS,
    Trajectory,
    add_noise,
    builtin_system,
    duffing_system,
    estimate_noise_std,
    learned_system,
    noise_generator,
    simulate,
)


@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_true_coefficients_reproduce_rhs(name):
    system = builtin_system(name)
    rng = np.random.default_rng(0)
    u = rng.uniform(-2.0, 2.0, size=(25, system.m))
    library_rhs = evaluate_library(system.basis, u) @ system.true_coefficients.T
    assert_allclose(library_rhs, system(u), atol=1e-12)


def test_system_table_values():
    ps1 = builtin_system("duffing_ps1")
    assert ps1.parameters == {"kappa": 1.0, "gamma": 0.1, "epsilon": 5.0}
    assert ps1.default_ic == (0.0, 1.0) and ps1.default_t_end == 10.0 and ps1.basis.d == 4
    rossler = builtin_system("rossler")
    assert rossler.default_ic == (0.0, -5.0, 0.0) and rossler.basis.d == 2
    lorenz = builtin_system("lorenz96")
    assert lorenz.m == 6 and lorenz.default_t_end == 5.0 and lorenz.basis.d == 3
    assert lorenz.default_ic == (1.0, 8.0, 8.0, 8.0, 8.0, 8.0)


def test_van_der_pol_rhs_at_initial_condition():
    assert_allclose(builtin_system("van_der_pol")(np.array([0.0, 1.0])), [1.0, 2.0])


def test_lorenz96_rhs_uses_cyclic_neighbours():
    system = builtin_system("lorenz96")
    u = np.arange(1.0, 7.0)
    expected = [(u[(i + 1) % 6] - u[i - 2]) * u[i - 1] - u[i] + 8.0 for i in range(6)]
    assert_allclose(system(u), expected)


def test_unknown_system_lists_valid_names():
    with pytest.raises(UnknownSystemError) as info:
        builtin_system("lorenz63")
    assert "duffing_ps1" in str(info.value)


def test_simulate_exponential_decay():
    basis = enumerate_basis(1, 1)
    decay = learned_system(basis, np.array([[0.0, -1.0]]))
    traj = simulate(decay, ic=[1.0], t_end=2.0, n=201)
    assert traj.values.shape == (201, 1)
    assert traj.kind == "true"
    assert_allclose(traj.times, np.linspace(0.0, 2.0, 201))
    assert_allclose(traj.values[:, 0], np.exp(-traj.times), atol=1e-10)


def test_simulate_detects_blow_up():
    # u' = u^2 from u(0) = 1 blows up at t = 1
    basis = enumerate_basis(1, 2)
    riccati = learned_system(basis, np.array([[0.0, 0.0, 1.0]]))
    with pytest.raises(DivergenceError) as info:
        simulate(riccati, ic=[1.0], t_end=2.0, n=201)
    assert 0.9 < info.value.time <= 1.1
    assert np.all(np.isfinite(info.value.samples))
    assert info.value.samples.shape[1] == 1


def test_simulate_validates_arguments():
    system = builtin_system("duffing_ps2")
    with pytest.raises(InvalidDimensionError):
        simulate(system, n=1)
    with pytest.raises(InvalidDimensionError):
        simulate(system, ic=[0.0, 1.0, 2.0])


def test_noise_is_reproducible_and_keyed_by_state():
    truth = simulate(builtin_system("duffing_ps2"), n=300)
    first = add_noise(truth, 0.1, seed=7)
    second = add_noise(truth, 0.1, seed=7)
    other = add_noise(truth, 0.1, seed=8)
    assert first.kind == "noisy"
    assert np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)
    expected = truth.values[:, 1] + 0.1 * noise_generator(7, 1).standard_normal(300)
    assert np.array_equal(first.values[:, 1], expected)


def test_noise_per_state_levels_and_errors():
    truth = simulate(builtin_system("duffing_ps2"), n=200)
    noisy = add_noise(truth, [0.0, 0.5], seed=1)
    assert np.array_equal(noisy.values[:, 0], truth.values[:, 0])
    with pytest.raises(InvalidDimensionError):
        add_noise(truth, [0.1, 0.1, 0.1], seed=1)
    with pytest.raises(InvalidDimensionError):
        add_noise(noisy, 0.1, seed=1)


def test_noise_level_estimate():
    truth = simulate(builtin_system("duffing_ps2"), n=4000)
    noisy = add_noise(truth, 0.2, seed=3)
    assert_allclose(estimate_noise_std(noisy), 0.2, rtol=0.05)
    assert np.all(estimate_noise_std(truth) < 1e-3)


def test_trajectory_csv_schema(tmp_path):
    traj = simulate(builtin_system("rossler"), n=50)
    path = tmp_path / "trajectory.csv"
    traj.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,u1,u2,u3"
    loaded = Trajectory.from_csv(path, kind="true")
    assert np.array_equal(loaded.values, traj.values)
    assert np.array_equal(loaded.times, traj.times)


def test_trajectory_rejects_mismatched_rows():
    with pytest.raises(InvalidDimensionError):
        Trajectory(times=np.linspace(0, 1, 5), values=np.zeros((4, 2)))


def test_undamped_duffing_conserves_energy():
    kappa, epsilon = 0.2, 1.0
    traj = simulate(duffing_system(kappa, 0.0, epsilon), n=1001)
    u1, u2 = traj.values.T
    energy = 0.5 * u2 ** 2 + 0.5 * kappa * u1 ** 2 + 0.25 * epsilon * u1 ** 4
    assert np.max(np.abs(energy - energy[0])) < 1e-7 * energy[0]


def test_rk4_error_drops_sixteenfold_when_the_step_halves():
    system = builtin_system("duffing_ps2")
    reference = simulate(system, n=11, max_step=0.1 / 64).values
    errors = [np.max(np.abs(simulate(system, n=11, max_step=h).values - reference))
              for h in (0.1, 0.05)]
    assert 12.0 < errors[0] / errors[1] < 20.0


def test_growth_reaches_e():
    growth = learned_system(enumerate_basis(1, 1), np.array([[0.0, 1.0]]))
    traj = simulate(growth, ic=[1.0], t_end=1.0, n=2)
    assert abs(traj.values[-1, 0] - np.e) < 1e-8


def test_noise_has_no_lag_one_correlation():
    t = np.linspace(0.0, 1.0, 20000)
    flat = Trajectory(times=t, values=np.zeros((t.size, 2)), kind="true")
    noise = add_noise(flat, 0.3, seed=9).values
    for k in range(2):
        lag_one = np.corrcoef(noise[:-1, k], noise[1:, k])[0, 1]
        assert abs(lag_one) < 4.0 / np.sqrt(t.size)
